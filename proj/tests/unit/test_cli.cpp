#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* p = std::getenv("GPSOH_CLI");
    return p ? p : "";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        if (cli().empty() || !fs::exists(cli())) GTEST_SKIP() << "GPSOH_CLI not set";
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("gpsoh_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override {
        if (!dir.empty()) fs::remove_all(dir);
    }

    // Small synthetic run so that every subcommand finishes in seconds.
    fs::path small_config(const std::string& extra_dataset = "") const {
        const fs::path p = dir / "small.json";
        std::ofstream(p) << R"({
  "seed": 7,
  "dataset": {"kind": "synthetic", "scenario": "linear_fade", "segments": 4, "train_segments": 3)"
                         << extra_dataset << R"(},
  "cell": {"capacity_prior_ah": 0.28, "r0_prior_ohm": 0.13, "n_soc": 7, "n_current": 1,
           "current_min": 0.0, "current_max": 0.28},
  "estimator": {"soc_init": "full"},
  "hyperparameters": {"budget": 5},
  "predict": {"horizons_days": [0, 10]},
  "dva": {"n_soc": 41},
  "baseline": {"relative_grid": [1e-6, 1e-4]}
})";
        return p;
    }

    int run(const std::string& command, const fs::path& config, const fs::path& out,
            const std::string& extra = "") const {
        const std::string line = "\"" + cli() + "\" " + command + " --config \"" + config.string() + "\" --out \"" +
                                 out.string() + "\" " + extra + " >\"" + (dir / "stdout.txt").string() +
                                 "\" 2>\"" + (dir / "stderr.txt").string() + "\"";
        const int status = std::system(line.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string stderr_text() const { return slurp(dir / "stderr.txt"); }
};

struct Csv {
    std::map<std::string, std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
}

Csv read_csv(const fs::path& p) {
    std::ifstream in(p);
    Csv c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::string key = line.substr(2, colon - 2), value = line.substr(colon + 1);
                while (!value.empty() && value.front() == ' ') value.erase(0, 1);
                c.meta[key] = value;
            }
            continue;
        }
        if (c.columns.empty()) c.columns = split(line);
        else c.rows.push_back(split(line));
    }
    return c;
}

}  // namespace

TEST_F(CliTest, MissingConfigFileIsConfigError) {
    EXPECT_EQ(run("prepare", dir / "nope.json", dir / "out"), 2);
}

TEST_F(CliTest, InvalidConfigValueIsConfigError) {
    const fs::path p = dir / "bad.json";
    std::ofstream(p) << R"({"dataset": {"segments": 3, "train_segments": 5}})";
    EXPECT_EQ(run("prepare", p, dir / "out"), 2);
    EXPECT_NE(stderr_text().find("train_segments"), std::string::npos);
}

TEST_F(CliTest, UnknownColumnMappingIsConfigErrorNamingColumn) {
    std::ofstream(dir / "cyc.csv") << "time_s,current_a,voltage_v\n0,-0.1,4.1\n1,-0.1,4.0\n";
    const fs::path p = dir / "csv.json";
    std::ofstream(p) << R"({"dataset": {"kind": "csv", "cycling_csv": ")" << (dir / "cyc.csv").string()
                     << R"(", "rpt_csv": ")" << (dir / "cyc.csv").string()
                     << R"(", "schema": {"time": "t_missing", "current": "current_a", "voltage": "voltage_v"}}})";
    EXPECT_EQ(run("prepare", p, dir / "out"), 2);
    EXPECT_NE(stderr_text().find("t_missing"), std::string::npos);
}

TEST_F(CliTest, MissingInputsAreDataError) {
    EXPECT_EQ(run("estimate", small_config(), dir / "empty"), 3);
}

TEST_F(CliTest, PrepareIsIdempotent) {
    const auto cfg = small_config();
    ASSERT_EQ(run("prepare", cfg, dir / "a"), 0);
    std::map<std::string, std::string> first;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a"))
        if (e.is_regular_file()) first[fs::relative(e.path(), dir / "a").string()] = slurp(e.path());
    ASSERT_FALSE(first.empty());
    ASSERT_EQ(run("prepare", cfg, dir / "a"), 0);
    std::size_t seen = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
        if (!e.is_regular_file()) continue;
        const auto key = fs::relative(e.path(), dir / "a").string();
        ASSERT_TRUE(first.count(key)) << key;
        EXPECT_EQ(first[key], slurp(e.path())) << key;
        ++seen;
    }
    EXPECT_EQ(seen, first.size());
}

TEST_F(CliTest, FullPipelineOutputsAreConsistent) {
    const auto cfg = small_config();
    const fs::path out = dir / "run";
    for (const char* cmd : {"prepare", "fit", "estimate", "predict", "dva", "baseline"})
        ASSERT_EQ(run(cmd, cfg, out), 0) << cmd << ": " << stderr_text();

    // One trace row per objective evaluation, never beyond the budget.
    const Csv trace = read_csv(out / "fit_trace.csv");
    const Csv hp = read_csv(out / "hyperparams.csv");
    EXPECT_EQ(std::to_string(trace.rows.size()), hp.meta.at("evaluations"));
    EXPECT_GE(trace.rows.size(), 1u);
    EXPECT_LE(trace.rows.size(), 5u);
    for (std::size_t r = 0; r < trace.rows.size(); ++r) EXPECT_EQ(trace.rows[r][0], std::to_string(r));

    // Zero-day forecast coincides with the final estimate.
    const Csv est = read_csv(out / "health_estimate.csv");
    const Csv pred = read_csv(out / "health_predict.csv");
    ASSERT_FALSE(est.rows.empty());
    ASSERT_EQ(pred.rows.size(), 2u);
    ASSERT_EQ(est.columns, pred.columns);
    for (std::size_t c = 0; c < est.columns.size(); ++c) {
        if (est.columns[c] == "extrapolated") continue;
        EXPECT_NEAR(std::stod(pred.rows[0][c]), std::stod(est.rows.back()[c]),
                    1e-9 * std::abs(std::stod(est.rows.back()[c])) + 1e-15)
            << est.columns[c];
    }

    // GP and baseline health tables share a schema.
    const Csv base = read_csv(out / "baseline_health.csv");
    EXPECT_EQ(base.columns, est.columns);
    EXPECT_EQ(read_csv(out / "baseline_r0.csv").columns, read_csv(out / "r0_estimate.csv").columns);

    // Provenance in every output.
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
        const Csv t = read_csv(e.path());
        for (const char* key : {"config_hash", "seed", "tool_version"})
            EXPECT_TRUE(t.meta.count(key)) << e.path() << " lacks " << key;
        EXPECT_EQ(t.meta.count("seed") ? t.meta.at("seed") : "", "7") << e.path();
        ++files;
    }
    EXPECT_GE(files, 15u);
}

TEST_F(CliTest, SameSeedGivesIdenticalHyperparameters) {
    const auto cfg = small_config();
    for (const char* sub : {"a", "b"}) {
        ASSERT_EQ(run("prepare", cfg, dir / sub), 0);
        ASSERT_EQ(run("fit", cfg, dir / sub), 0) << stderr_text();
    }
    EXPECT_EQ(slurp(dir / "a" / "hyperparams.csv"), slurp(dir / "b" / "hyperparams.csv"));
}

TEST_F(CliTest, SeedOverrideChangesData) {
    const auto cfg = small_config();
    ASSERT_EQ(run("prepare", cfg, dir / "a"), 0);
    ASSERT_EQ(run("prepare", cfg, dir / "b", "--seed 8"), 0);
    EXPECT_NE(slurp(dir / "a" / "segments" / "segment_00.csv"), slurp(dir / "b" / "segments" / "segment_00.csv"));
    EXPECT_EQ(read_csv(dir / "b" / "ocv.csv").meta.at("seed"), "8");
}

TEST_F(CliTest, HorizonOverride) {
    const auto cfg = small_config();
    const fs::path out = dir / "run";
    ASSERT_EQ(run("prepare", cfg, out), 0);
    ASSERT_EQ(run("predict", cfg, out, "--horizon-days 25"), 0) << stderr_text();
    const Csv pred = read_csv(out / "health_predict.csv");
    const Csv idx = read_csv(out / "segments" / "index.csv");
    ASSERT_GE(pred.rows.size(), 1u);
    EXPECT_NEAR(std::stod(pred.rows.back()[0]), std::stod(idx.rows[2][1]) + 25.0, 1e-9);
}
