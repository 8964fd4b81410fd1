#pragma once

// Run configuration for the command-line tool: JSON with nested sections,
// validated in full before any compute, and hashed for output provenance.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpsoh/baseline.hpp"
#include "gpsoh/datasets.hpp"
#include "gpsoh/ecm.hpp"
#include "gpsoh/error.hpp"
#include "gpsoh/estimator.hpp"
#include "gpsoh/hyperopt.hpp"
#include "gpsoh/hyperparams.hpp"
#include "gpsoh/table_io.hpp"

namespace gpsoh::cli {

using nlohmann::json;

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" or "csv"
    std::string scenario = "linear_fade";
    std::string cycling_csv;
    std::string rpt_csv;
    CsvSchema schema;
    double nominal_capacity_ah = 0.28;
    std::string cell_id = "cell";
    std::size_t segments = 13;
    std::size_t train_segments = 10;
    std::size_t ocv_bins = 100;
};

struct DvaConfig {
    int n_soc = 101;
    double reference_current = -0.14;
    int half_window = 2;
    double prominence_fraction = 0.05;
    double polarity = 1.0;
    ModeSelection modes;
};

struct BaselineConfig {
    std::vector<double> relative_grid{1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
    double inv_capacity_init_rel_std = 0.02;
    double resistance_init_rel_std = 0.25;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";
    DatasetConfig dataset;
    CellConfig cell;
    EstimatorOptions estimator;
    std::optional<HyperParams> hp_init;  // natural values; data heuristics when absent
    double bounds_width = 6.0;
    OptimizerOptions optimizer;
    std::vector<double> horizons_days{0.0, 10.0, 20.0, 30.0};
    DvaConfig dva;
    BaselineConfig baseline;

    json raw;  // effective configuration, after command-line overrides

    void validate() const {
        cell.validate();
        if (dataset.kind != "synthetic" && dataset.kind != "csv")
            throw ConfigError("dataset.kind must be 'synthetic' or 'csv'");
        if (dataset.kind == "csv") {
            if (dataset.cycling_csv.empty()) throw ConfigError("dataset.cycling_csv is required for csv datasets");
            if (dataset.rpt_csv.empty()) throw ConfigError("dataset.rpt_csv is required for csv datasets");
            for (const auto* col : {&dataset.schema.time_column, &dataset.schema.current_column,
                                    &dataset.schema.voltage_column})
                if (col->empty()) throw ConfigError("dataset.schema: empty column mapping");
        }
        if (!(dataset.nominal_capacity_ah > 0.0)) throw ConfigError("dataset.nominal_capacity_ah must be positive");
        if (dataset.segments < 1) throw ConfigError("dataset.segments must be >= 1");
        if (dataset.train_segments < 1 || dataset.train_segments > dataset.segments)
            throw ConfigError("dataset.train_segments must be in [1, segments]");
        if (hp_init) hp_init->validate();
        if (!(bounds_width > 0.0)) throw ConfigError("hyperparameters.bounds_width must be positive");
        if (optimizer.budget < 1) throw ConfigError("hyperparameters.budget must be >= 1");
        for (double h : horizons_days)
            if (!(h >= 0.0)) throw ConfigError("predict.horizons_days must be non-negative");
        if (dva.n_soc < 2 * dva.half_window + 1) throw ConfigError("dva.n_soc too small for the derivative window");
        if (dva.reference_current == 0.0) throw ConfigError("dva.reference_current must be non-zero");
        if (dva.polarity != 1.0 && dva.polarity != -1.0) throw ConfigError("dva.polarity must be +1 or -1");
        if (baseline.relative_grid.empty()) throw ConfigError("baseline.relative_grid must not be empty");
    }

    // The output location does not affect results, so it is left out.
    std::string hash() const {
        json j = raw;
        j.erase("output_dir");
        return hex64(fnv1a(j.dump()));
    }
};

namespace detail_cfg {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void require_object(const json& j, const char* section) {
    if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
}

}  // namespace detail_cfg

/// Parses an already-merged JSON document.
inline RunConfig parse_config(const json& j) {
    using detail_cfg::read;
    if (!j.is_object()) throw ConfigError("config root must be an object");
    RunConfig c;
    c.raw = j;
    read(j, "seed", c.seed);
    read(j, "output_dir", c.output_dir);

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        detail_cfg::require_object(d, "dataset");
        read(d, "kind", c.dataset.kind);
        read(d, "scenario", c.dataset.scenario);
        read(d, "cycling_csv", c.dataset.cycling_csv);
        read(d, "rpt_csv", c.dataset.rpt_csv);
        read(d, "nominal_capacity_ah", c.dataset.nominal_capacity_ah);
        read(d, "cell_id", c.dataset.cell_id);
        read(d, "segments", c.dataset.segments);
        read(d, "train_segments", c.dataset.train_segments);
        read(d, "ocv_bins", c.dataset.ocv_bins);
        if (d.contains("schema")) {
            const json& s = d.at("schema");
            detail_cfg::require_object(s, "dataset.schema");
            read(s, "time", c.dataset.schema.time_column);
            read(s, "current", c.dataset.schema.current_column);
            read(s, "voltage", c.dataset.schema.voltage_column);
            read(s, "time_scale", c.dataset.schema.time_scale);
            read(s, "current_scale", c.dataset.schema.current_scale);
            read(s, "voltage_scale", c.dataset.schema.voltage_scale);
            read(s, "discharge_positive", c.dataset.schema.discharge_positive);
            read(s, "max_malformed_fraction", c.dataset.schema.max_malformed_fraction);
            std::string delim = ",";
            read(s, "delimiter", delim);
            if (delim.size() != 1) throw ConfigError("dataset.schema.delimiter must be one character");
            c.dataset.schema.delimiter = delim[0];
        }
    }

    if (j.contains("cell")) {
        const json& s = j.at("cell");
        detail_cfg::require_object(s, "cell");
        double q_prior = 0.0;
        read(s, "capacity_prior_ah", q_prior);
        if (q_prior != 0.0) {
            if (!(q_prior > 0.0)) throw ConfigError("cell.capacity_prior_ah must be positive");
            c.cell.q0 = 1.0 / q_prior;
        }
        read(s, "r0_prior_ohm", c.cell.r0);
        read(s, "v_min", c.cell.v_min);
        read(s, "v_max", c.cell.v_max);
        read(s, "n_soc", c.cell.n_soc);
        read(s, "n_current", c.cell.n_current);
        read(s, "current_min", c.cell.current_min);
        read(s, "current_max", c.cell.current_max);
    }

    if (j.contains("estimator")) {
        const json& s = j.at("estimator");
        detail_cfg::require_object(s, "estimator");
        std::string init = "rest_voltage", update = "joseph";
        read(s, "soc_init", init);
        read(s, "covariance_update", update);
        if (init == "rest_voltage") c.estimator.soc_init = SocInit::RestVoltage;
        else if (init == "full") c.estimator.soc_init = SocInit::Full;
        else throw ConfigError("estimator.soc_init must be 'rest_voltage' or 'full'");
        if (update == "joseph") c.estimator.covariance_update = CovarianceUpdate::Joseph;
        else if (update == "as_printed") c.estimator.covariance_update = CovarianceUpdate::AsPrinted;
        else throw ConfigError("estimator.covariance_update must be 'joseph' or 'as_printed'");
        read(s, "soc_init_std", c.estimator.soc_init_std);
        read(s, "min_initial_age_days", c.estimator.min_initial_age);
        read(s, "input_uncertainty", c.estimator.input_uncertainty);
        read(s, "eig_check_stride", c.estimator.eig_check_stride);
    }

    if (j.contains("hyperparameters")) {
        const json& s = j.at("hyperparameters");
        detail_cfg::require_object(s, "hyperparameters");
        read(s, "bounds_width", c.bounds_width);
        read(s, "budget", c.optimizer.budget);
        read(s, "fd_step", c.optimizer.fd_step);
        read(s, "max_step", c.optimizer.max_step);
        if (s.contains("init")) {
            const json& i = s.at("init");
            detail_cfg::require_object(i, "hyperparameters.init");
            double v[5] = {1e-3, 0.25, 0.2, 1.0, 25e-6};
            const auto names = HyperParams::names();
            for (int k = 0; k < 5; ++k) read(i, names[static_cast<std::size_t>(k)], v[k]);
            for (double x : v)
                if (!(x > 0.0)) throw ConfigError("hyperparameters.init values must be positive");
            c.hp_init = HyperParams::natural(v[0], v[1], v[2], v[3], v[4], c.cell.q0, c.cell.r0);
        }
    }

    if (j.contains("predict")) {
        detail_cfg::require_object(j.at("predict"), "predict");
        read(j.at("predict"), "horizons_days", c.horizons_days);
    }

    if (j.contains("dva")) {
        const json& s = j.at("dva");
        detail_cfg::require_object(s, "dva");
        read(s, "n_soc", c.dva.n_soc);
        read(s, "reference_current", c.dva.reference_current);
        read(s, "half_window", c.dva.half_window);
        read(s, "prominence_fraction", c.dva.prominence_fraction);
        read(s, "polarity", c.dva.polarity);
        read(s, "anchor_id", c.dva.modes.anchor_id);
        std::vector<int> pair{c.dva.modes.pair_first, c.dva.modes.pair_second};
        read(s, "pair", pair);
        if (pair.size() != 2) throw ConfigError("dva.pair must have two peak ids");
        c.dva.modes.pair_first = pair[0];
        c.dva.modes.pair_second = pair[1];
    }

    if (j.contains("baseline")) {
        const json& s = j.at("baseline");
        detail_cfg::require_object(s, "baseline");
        read(s, "relative_grid", c.baseline.relative_grid);
        read(s, "inv_capacity_init_rel_std", c.baseline.inv_capacity_init_rel_std);
        read(s, "resistance_init_rel_std", c.baseline.resistance_init_rel_std);
    }
    return c;
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
        return json::parse(in, nullptr, true, true);  // comments allowed
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

/// Command-line overrides, applied to the JSON before parsing so that the hash
/// covers them.
struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> train_segments;
    std::optional<int> grid_nz;
    std::optional<int> grid_ni;
    std::optional<double> horizon_days;

    void apply(json& j) const {
        if (out) j["output_dir"] = *out;
        if (seed) j["seed"] = *seed;
        if (train_segments) j["dataset"]["train_segments"] = *train_segments;
        if (grid_nz) j["cell"]["n_soc"] = *grid_nz;
        if (grid_ni) j["cell"]["n_current"] = *grid_ni;
        if (horizon_days) j["predict"]["horizons_days"] = std::vector<double>{0.0, *horizon_days};
    }
};

inline RunConfig load_config(const std::string& path, const Overrides& ov = {}) {
    json j = read_json(path);
    ov.apply(j);
    RunConfig c = parse_config(j);
    c.validate();
    return c;
}

}  // namespace gpsoh::cli
