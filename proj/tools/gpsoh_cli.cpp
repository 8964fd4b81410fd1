// gpsoh: battery health estimation from cycling data.
//
//   gpsoh <prepare|fit|estimate|predict|dva|synth|baseline> --config run.json [--out dir] ...
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

enum ExitCode { kOk = 0, kGeneric = 1, kConfig = 2, kData = 3, kNumerical = 4 };

}  // namespace

int main(int argc, char** argv) {
    using namespace gpsoh;
    using namespace gpsoh::cli;

    CLI::App app{"Capacity and resistance co-estimation with state-space Gaussian processes"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t train_segments = 0;
    int grid_nz = 0, grid_ni = 0;
    double horizon = 0.0;

    const std::map<std::string, std::pair<std::string, std::function<void(const Workspace&)>>> commands{
        {"prepare", {"Extract discharge segments and calibrate the OCV", cmd_prepare}},
        {"fit", {"Fit GP hyperparameters by maximum likelihood", cmd_fit}},
        {"estimate", {"Smoothed capacity and R0 estimates over the training ages", cmd_estimate}},
        {"predict", {"Propagate the last estimate forward by the configured horizons", cmd_predict}},
        {"dva", {"d[I R0]/dQ curves, peak tracks and degradation modes", cmd_dva}},
        {"synth", {"Write a synthetic raw dataset in the CSV layout prepare reads", cmd_synth}},
        {"baseline", {"Random-walk dual-estimation benchmark", cmd_baseline}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("--out", out, "Output directory (overrides output_dir)");
        sub->add_option("--seed", seed, "Random seed (overrides seed)");
        sub->add_option("--train-segments", train_segments, "Number of training segments");
        sub->add_option("--grid-nz", grid_nz, "SOC grid levels")->check(CLI::PositiveNumber);
        sub->add_option("--grid-ni", grid_ni, "Current grid levels")->check(CLI::PositiveNumber);
        sub->add_option("--horizon-days", horizon, "Prediction horizon in days")->check(CLI::NonNegativeNumber);
        subs[name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        if (sub->count("--out")) ov.out = out;
        if (sub->count("--seed")) ov.seed = seed;
        if (sub->count("--train-segments")) ov.train_segments = train_segments;
        if (sub->count("--grid-nz")) ov.grid_nz = grid_nz;
        if (sub->count("--grid-ni")) ov.grid_ni = grid_ni;
        if (sub->count("--horizon-days")) ov.horizon_days = horizon;
        try {
            const Workspace ws(load_config(config_path, ov), name);
            commands.at(name).second(ws);
            return kOk;
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kConfig;
        } catch (const InvalidArgument& e) {
            std::cerr << "invalid argument: " << e.what() << "\n";
            return kConfig;
        } catch (const DataError& e) {
            std::cerr << "data error: " << e.what() << "\n";
            return kData;
        } catch (const NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            return kNumerical;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kGeneric;
        }
    }
    return kGeneric;
}
