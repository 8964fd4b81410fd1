#pragma once

// Subcommand implementations. Each reads the prepared artifacts it needs from
// the output directory and writes self-describing tables back into it.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gpsoh/baseline.hpp"
#include "gpsoh/datasets.hpp"
#include "gpsoh/dva.hpp"
#include "gpsoh/estimator.hpp"
#include "gpsoh/hyperopt.hpp"
#include "gpsoh/scenarios.hpp"
#include "gpsoh/table_io.hpp"
#include "run_config.hpp"

namespace gpsoh::cli {

namespace fs = std::filesystem;
using detail::format_double;

class Workspace {
public:
    Workspace(RunConfig cfg, std::string command) : cfg_(std::move(cfg)), command_(std::move(command)) {
        fs::create_directories(cfg_.output_dir);
    }

    const RunConfig& config() const { return cfg_; }
    fs::path path(const std::string& name) const { return fs::path(cfg_.output_dir) / name; }

    void write(const std::string& name, Table t) const {
        t.set("tool_version", kToolVersion);
        t.set("command", command_);
        t.set("config_hash", cfg_.hash());
        t.set("seed", std::to_string(cfg_.seed));
        const fs::path p = path(name);
        fs::create_directories(p.parent_path());
        write_table(p.string(), t);
    }

    Table read(const std::string& name) const {
        const fs::path p = path(name);
        if (!fs::exists(p)) throw DataError("missing " + p.string() + " (run the earlier subcommand first)");
        return read_table(p.string());
    }

private:
    RunConfig cfg_;
    std::string command_;
};

inline const char* kSegmentIndex = "segments/index.csv";
inline const char* kOcvFile = "ocv.csv";
inline const char* kHyperFile = "hyperparams.csv";

// ---------------------------------------------------------------------------
// tables

inline Table health_table(const HealthEstimate& h, const std::string& source) {
    Table t;
    t.kind = "health";
    t.set("source", source);
    t.columns = {"age_days", "extrapolated", "capacity_ah", "capacity_std_ah", "inv_capacity"};
    for (const auto& r : h.rows)
        t.rows.push_back({format_double(r.age_days), r.extrapolated ? "1" : "0", format_double(r.capacity_mean),
                          format_double(std::sqrt(r.capacity_var)), format_double(r.inv_capacity_mean)});
    return t;
}

inline Table r0_table(const HealthEstimate& h, const std::string& source) {
    Table t;
    t.kind = "r0-surface";
    t.set("source", source);
    t.columns = {"age_days", "soc", "abs_current_a", "r0_ohm", "r0_std_ohm"};
    const auto& pts = h.grid.points();
    for (const auto& r : h.rows)
        for (std::size_t k = 0; k < pts.size(); ++k)
            t.rows.push_back({format_double(r.age_days), format_double(pts[k].soc), format_double(pts[k].current),
                              format_double(r.r0_mean[k]), format_double(std::sqrt(r.r0_var[k]))});
    return t;
}

inline Table ocv_table(const OcvCurve& ocv) {
    Table t;
    t.kind = "ocv";
    t.columns = {"soc", "ocv_v"};
    for (std::size_t k = 0; k < ocv.soc_knots().size(); ++k)
        t.rows.push_back({format_double(ocv.soc_knots()[k]), format_double(ocv.voltage_knots()[k])});
    return t;
}

inline OcvCurve ocv_from_table(const Table& t) {
    const auto cs = t.column("soc"), cv = t.column("ocv_v");
    std::vector<double> soc, v;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        soc.push_back(t.number(r, cs));
        v.push_back(t.number(r, cv));
    }
    try {
        return OcvCurve(soc, v);
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("ocv file: ") + e.what());
    }
}

inline Table hyper_table(const HyperParams& hp, const HyperBounds& b) {
    Table t;
    t.kind = "hyperparameters";
    t.set("q0_per_ah", format_double(hp.q0));
    t.set("r0_ohm", format_double(hp.r0));
    t.columns = {"name", "value", "log_value", "log_lower", "log_upper"};
    const auto v = hp.log_vector();
    const auto names = HyperParams::names();
    for (int k = 0; k < HyperParams::kCount; ++k)
        t.rows.push_back({names[static_cast<std::size_t>(k)], format_double(std::exp(v(k))), format_double(v(k)),
                          format_double(b.lower(k)), format_double(b.upper(k))});
    return t;
}

inline HyperParams hyper_from_table(const Table& t, const CellConfig& cell) {
    HyperParams hp;
    hp.q0 = cell.q0;
    hp.r0 = cell.r0;
    HyperParams::Vector v = hp.log_vector();
    const auto names = HyperParams::names();
    const auto cn = t.column("name"), cl = t.column("log_value");
    for (int k = 0; k < HyperParams::kCount; ++k) {
        bool found = false;
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            if (t.rows[r][cn] == names[static_cast<std::size_t>(k)]) {
                v(k) = t.number(r, cl);
                found = true;
            }
        if (!found) throw DataError(std::string("hyperparameter file lacks ") + names[static_cast<std::size_t>(k)]);
    }
    return hp.with_log_vector(v);
}

// ---------------------------------------------------------------------------
// shared loading

struct Prepared {
    std::vector<Segment> segments;
    OcvCurve ocv;

    std::vector<Segment> train() const {
        std::vector<Segment> out;
        for (const auto& s : segments)
            if (s.role == SegmentRole::Train) out.push_back(s);
        if (out.empty()) throw DataError("no training segments");
        return out;
    }
};

inline Prepared load_prepared(const Workspace& ws) {
    Prepared p;
    const Table index = ws.read(kSegmentIndex);
    const auto cf = index.column("file");
    const std::size_t n_train = ws.config().dataset.train_segments;
    for (std::size_t r = 0; r < index.rows.size(); ++r) {
        Segment s = segment_from_table(ws.read("segments/" + index.rows[r][cf]));
        s.role = r < n_train ? SegmentRole::Train : SegmentRole::Test;  // --train-segments may differ from prepare
        p.segments.push_back(std::move(s));
    }
    p.ocv = ocv_from_table(ws.read(kOcvFile));
    return p;
}

inline HyperParams initial_hp(const RunConfig& cfg, std::span<const Segment> train) {
    HyperParams hp = cfg.hp_init ? *cfg.hp_init : initial_hyperparams(train, cfg.cell);
    hp.q0 = cfg.cell.q0;
    hp.r0 = cfg.cell.r0;
    return hp;
}

/// Fitted hyperparameters when `fit` has run, else the initialization.
inline HyperParams current_hp(const Workspace& ws, std::span<const Segment> train) {
    if (fs::exists(ws.path(kHyperFile))) return hyper_from_table(ws.read(kHyperFile), ws.config().cell);
    return initial_hp(ws.config(), train);
}

inline scenarios::Schedule schedule_for(const DatasetConfig& d) {
    scenarios::Schedule s;
    s.n_train = d.train_segments;
    s.last_train_age = 1.0 + 11.0 * static_cast<double>(d.train_segments - 1);
    s.test_offsets.clear();
    for (std::size_t k = d.train_segments; k < d.segments; ++k)
        s.test_offsets.push_back(10.0 * static_cast<double>(k - d.train_segments + 1));
    return s;
}

inline SynthSpec scenario_spec(const DatasetConfig& d) {
    SynthSpec spec = scenarios::by_name(d.scenario);
    const double first = spec.ages.front();
    const auto sch = schedule_for(d);
    const double shift = first - sch.first_age;
    scenarios::apply_schedule(spec, sch);
    for (double& a : spec.ages) a += shift;
    return spec;
}

// ---------------------------------------------------------------------------
// commands

inline void cmd_prepare(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    std::vector<Segment> segs;
    OcvCurve ocv;
    if (cfg.dataset.kind == "synthetic") {
        const SynthSpec spec = scenario_spec(cfg.dataset);
        const SynthOutput out = synth_generate(spec, cfg.seed);
        segs = out.segments;
        ocv = spec.ocv;
        Table truth;
        truth.kind = "synth-truth";
        truth.set("scenario", cfg.dataset.scenario);
        truth.columns = {"age_days", "capacity_ah", "soc_start", "truncated"};
        for (const auto& t : out.truth)
            truth.rows.push_back({format_double(t.age_days), format_double(t.capacity_ah), format_double(t.soc_start),
                                  t.truncated ? "1" : "0"});
        ws.write("synth_truth.csv", truth);
    } else {
        LoadReport rep;
        const auto stream = load_cycling_csv(cfg.dataset.cycling_csv, cfg.dataset.schema, &rep);
        ExtractionCriteria crit;
        crit.nominal_capacity_ah = cfg.dataset.nominal_capacity_ah;
        crit.n_train = cfg.dataset.train_segments;
        crit.cell_id = cfg.dataset.cell_id;
        segs = extract_discharge_segments(stream, cfg.dataset.segments, crit);
        const auto rpt = load_cycling_csv(cfg.dataset.rpt_csv, cfg.dataset.schema);
        const OcvCalibration cal = calibrate_ocv(rpt, cfg.dataset.ocv_bins);
        ocv = cal.curve;
        std::cerr << "prepare: " << rep.rows << " rows, " << rep.malformed << " malformed; OCV from "
                  << format_double(cal.capacity_ah) << " Ah discharge\n";
    }
    Table index;
    index.kind = "segment-index";
    index.columns = {"file", "age_days", "role", "samples"};
    for (std::size_t k = 0; k < segs.size(); ++k) {
        const std::string name = "segment_" + std::string(k < 10 ? "0" : "") + std::to_string(k) + ".csv";
        ws.write("segments/" + name, segment_table(segs[k]));
        index.rows.push_back({name, format_double(segs[k].age_days), to_string(segs[k].role),
                              std::to_string(segs[k].size())});
    }
    ws.write(kSegmentIndex, index);
    ws.write(kOcvFile, ocv_table(ocv));
    std::cerr << "prepare: wrote " << segs.size() << " segments to " << ws.path("segments").string() << "\n";
}

inline void cmd_fit(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const Prepared p = load_prepared(ws);
    const auto train = p.train();
    const HyperParams init = initial_hp(cfg, train);
    const HyperBounds bounds = HyperBounds::around(init, cfg.bounds_width);
    const FitResult fit = optimize(init, bounds, train, cfg.cell, p.ocv, cfg.optimizer, cfg.estimator);

    Table hp = hyper_table(fit.hp, bounds);
    hp.set("initial_nlml", format_double(fit.initial_nlml));
    hp.set("nlml", format_double(fit.nlml));
    hp.set("evaluations", std::to_string(fit.optimization.trace.size()));
    hp.set("converged", fit.optimization.converged ? "true" : "false");
    ws.write(kHyperFile, hp);

    Table trace;
    trace.kind = "fit-trace";
    trace.columns = {"evaluation", "iteration", "nlml", "best_nlml"};
    for (const auto* n : HyperParams::names()) trace.columns.push_back(std::string("log_") + n);
    for (const auto& r : fit.optimization.trace) {
        std::vector<std::string> row{std::to_string(r.evaluation), std::to_string(r.iteration),
                                     format_double(r.value), format_double(r.best)};
        for (Eigen::Index k = 0; k < r.x.size(); ++k) row.push_back(format_double(r.x(k)));
        trace.rows.push_back(std::move(row));
    }
    ws.write("fit_trace.csv", trace);

    const CoEstimator est(fit.hp, cfg.cell, p.ocv, cfg.estimator);
    const auto run = est.run(train);
    const auto h = rts_smooth(run, est);
    ws.write("health_train.csv", health_table(h, "gp"));
    std::cerr << "fit: nlml " << format_double(fit.initial_nlml) << " -> " << format_double(fit.nlml) << " in "
              << fit.optimization.trace.size() << " evaluations ("
              << format_double(fit.optimization.trace.back().wall_s) << " s)\n";
}

inline void cmd_estimate(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const Prepared p = load_prepared(ws);
    const auto train = p.train();
    const CoEstimator est(current_hp(ws, train), cfg.cell, p.ocv, cfg.estimator);
    const auto run = est.run(train);
    const auto h = rts_smooth(run, est);
    Table ht = health_table(h, "gp");
    ht.set("nlml", format_double(run.diagnostics.nlml));
    ht.set("psd_repairs", std::to_string(run.diagnostics.psd_repairs));
    ws.write("health_estimate.csv", ht);
    ws.write("r0_estimate.csv", r0_table(h, "gp"));
}

inline void cmd_predict(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const Prepared p = load_prepared(ws);
    const auto train = p.train();
    const CoEstimator est(current_hp(ws, train), cfg.cell, p.ocv, cfg.estimator);
    const auto run = est.run(train);
    const auto h = predict_future(run.snapshots.back(), cfg.horizons_days, est);
    ws.write("health_predict.csv", health_table(h, "gp"));
    ws.write("r0_predict.csv", r0_table(h, "gp"));
}

inline void cmd_dva(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const Prepared p = load_prepared(ws);
    const auto train = p.train();
    const CoEstimator est(current_hp(ws, train), cfg.cell, p.ocv, cfg.estimator);
    const auto run = est.run(train);
    const auto snaps = smooth_snapshots(run.snapshots, est.dynamics());

    std::vector<double> soc;
    for (int k = 0; k < cfg.dva.n_soc; ++k) soc.push_back(static_cast<double>(k) / (cfg.dva.n_soc - 1));
    const double abs_i = std::abs(cfg.dva.reference_current);
    std::vector<DvdqCurve> curves;
    std::vector<double> caps, unc;
    Table ct;
    ct.kind = "dva-curves";
    ct.set("reference_current_a", format_double(cfg.dva.reference_current));
    ct.columns = {"age_days", "discharged_ah", "d_ir0_dq"};
    for (const auto& s : snaps) {
        const auto row = est.health_row(s.gp, s.age_days, false);
        DvdqCurve c = dirdq_from_estimates(soc, est.r0_profile(s.gp, soc, abs_i), row.capacity_mean,
                                           cfg.dva.reference_current, cfg.dva.half_window);
        c.age_days = s.age_days;
        for (std::size_t k = 0; k < c.ah.size(); ++k)
            ct.rows.push_back({format_double(c.age_days), format_double(c.ah[k]), format_double(c.value[k])});
        caps.push_back(row.capacity_mean);
        unc.push_back(0.5 * row.capacity_mean / (cfg.dva.n_soc - 1));
        curves.push_back(std::move(c));
    }
    ws.write("dva_curves.csv", ct);

    PeakOptions po;
    po.prominence_fraction = cfg.dva.prominence_fraction;
    po.polarity = cfg.dva.polarity;
    const PeakTrack track = track_peaks(curves, po);
    Table pt;
    pt.kind = "dva-peaks";
    pt.columns = {"age_days", "peak_id", "position_ah", "height", "prominence"};
    for (std::size_t a = 0; a < track.ages.size(); ++a)
        for (const auto& pk : track.peaks[a])
            pt.rows.push_back({format_double(track.ages[a]), std::to_string(pk.id), format_double(pk.position),
                               format_double(pk.height), format_double(pk.prominence)});
    ws.write("dva_peaks.csv", pt);

    Table mt;
    mt.kind = "dva-modes";
    mt.set("anchor_id", std::to_string(cfg.dva.modes.anchor_id));
    mt.set("pair", std::to_string(cfg.dva.modes.pair_first) + "," + std::to_string(cfg.dva.modes.pair_second));
    mt.columns = {"age_days", "lli_pct", "lli_unc_pct", "lam_n_pct", "lam_n_unc_pct"};
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("nan"); };
    for (const auto& m : degradation_modes(track, caps, unc, cfg.dva.modes))
        mt.rows.push_back({format_double(m.age_days), opt(m.lli_pct), format_double(m.lli_uncertainty_pct),
                           opt(m.lam_n_pct), format_double(m.lam_n_uncertainty_pct)});
    ws.write("dva_modes.csv", mt);
}

inline void cmd_baseline(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const Prepared p = load_prepared(ws);
    const auto train = p.train();
    const HyperParams hp = current_hp(ws, train);
    RwOptions ro;
    ro.q0 = cfg.cell.q0;
    ro.r0 = cfg.cell.r0;
    ro.noise_variance = hp.noise_variance();
    ro.soc_init = cfg.estimator.soc_init;
    ro.soc_init_std = cfg.estimator.soc_init_std;
    ro.inv_capacity_init_rel_std = cfg.baseline.inv_capacity_init_rel_std;
    ro.resistance_init_rel_std = cfg.baseline.resistance_init_rel_std;
    const RwTuning tun = tune_random_walk(train, p.ocv, cfg.cell, ro, cfg.baseline.relative_grid,
                                          cfg.baseline.relative_grid);
    const DualResult res = run_dual_estimation(train, tun.best, p.ocv, cfg.cell, ro);

    Table ht = health_table(res.estimate, "random-walk");
    ht.set("nlml", format_double(res.nlml));
    ht.set("rw_inv_capacity_var_per_day", format_double(tun.best.inv_capacity));
    ht.set("rw_resistance_var_per_day", format_double(tun.best.resistance));
    ht.set("diverged_segments", std::to_string(res.diverged_segments));
    ws.write("baseline_health.csv", ht);
    ws.write("baseline_r0.csv", r0_table(res.estimate, "random-walk"));

    Table gt;
    gt.kind = "baseline-tuning";
    gt.columns = {"inv_capacity_var_per_day", "resistance_var_per_day", "nlml"};
    for (const auto& [n, phi] : tun.grid)
        gt.rows.push_back({format_double(n.inv_capacity), format_double(n.resistance), format_double(phi)});
    ws.write("baseline_tuning.csv", gt);
}

/// Synthetic raw data in the CSV layout that `prepare` ingests.
inline void cmd_synth(const Workspace& ws) {
    const RunConfig& cfg = ws.config();
    const SynthSpec spec = scenario_spec(cfg.dataset);
    const SynthOutput out = synth_generate(spec, cfg.seed);
    auto csv = [&](const std::string& name, const std::vector<RawRecord>& rows) {
        Table t;
        t.kind = "cycling";
        t.set("scenario", cfg.dataset.scenario);
        t.columns = {"time_s", "current_a", "voltage_v"};
        for (const auto& r : rows)
            t.rows.push_back({format_double(r.time_s), format_double(r.current), format_double(r.voltage)});
        ws.write(name, t);
    };
    csv("synth_cycling.csv", synth_cycling_stream(out));
    csv("synth_rpt.csv", synth_rpt_discharge(spec, -0.28 / 20.0, 30.0, cfg.seed + 1, spec.ages.front()));
    Table truth;
    truth.kind = "synth-truth";
    truth.columns = {"age_days", "capacity_ah"};
    for (const auto& t : out.truth) truth.rows.push_back({format_double(t.age_days), format_double(t.capacity_ah)});
    ws.write("synth_truth.csv", truth);
}

}  // namespace gpsoh::cli
