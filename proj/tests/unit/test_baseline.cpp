#include <gtest/gtest.h>

#include "gpsoh/baseline.hpp"
#include "gpsoh/scenarios.hpp"

using namespace gpsoh;

namespace {

CellConfig cell() {
    CellConfig c;
    c.n_soc = 5;
    c.current_max = 0.28;
    return c;
}

SynthOutput constant_cell(double noise, std::uint64_t seed) {
    scenarios::Schedule sch;
    sch.n_train = 3;
    sch.last_train_age = 21.0;
    sch.test_offsets.clear();
    SynthSpec s = scenarios::linear_fade(sch);
    s.capacity = [](double) { return 0.28; };
    s.noise_std = noise;
    return synth_generate(s, seed);
}

RwOptions truth_options() {
    RwOptions o;
    o.q0 = 1.0 / 0.28;
    o.r0 = 0.13;
    o.soc_init = SocInit::Full;
    o.noise_variance = 1e-6;
    return o;
}

}  // namespace

TEST(DualEstimation, StaysAtTruthWithoutNoise) {
    const SynthOutput d = constant_cell(0.0, 1);
    const auto res = run_dual_estimation(d.segments, RwNoise{0.0, 0.0}, scenarios::reference_ocv(), cell(), truth_options());
    ASSERT_EQ(res.params.size(), 3u);
    for (const auto& p : res.params) {
        EXPECT_NEAR(p.theta(0), 1.0 / 0.28, 1e-9);
        EXPECT_NEAR(p.theta(1), 0.13, 1e-9);
    }
    EXPECT_EQ(res.diverged_segments, 0u);
    for (const auto& row : res.estimate.rows) EXPECT_NEAR(row.capacity_mean, 0.28, 1e-9);
}

TEST(DualEstimation, OutputsScalarResistanceOnTheGrid) {
    const SynthOutput d = constant_cell(0.005, 2);
    const auto res = run_dual_estimation(d.segments, RwNoise{}, scenarios::reference_ocv(), cell(), truth_options());
    EXPECT_EQ(res.estimate.grid.size(), 5u);
    for (const auto& row : res.estimate.rows) {
        ASSERT_EQ(row.r0_mean.size(), 5u);
        for (double r : row.r0_mean) EXPECT_EQ(r, row.r0_mean.front());
        EXPECT_GE(row.capacity_var, 0.0);
    }
}

TEST(DualEstimation, FlagsDivergence) {
    SynthOutput d = constant_cell(0.005, 3);
    for (double& v : d.segments[1].voltage) v -= 0.5;  // a gross sensor offset
    RwOptions o = truth_options();
    o.noise_variance = 25e-6;
    const auto res = run_dual_estimation(d.segments, RwNoise{1e-12, 1e-12}, scenarios::reference_ocv(), cell(), o);
    EXPECT_GE(res.diverged_segments, 1u);
    EXPECT_EQ(res.estimate.rows.size(), 3u);
}

TEST(DualEstimation, RejectsEmptyInput) {
    EXPECT_THROW(run_dual_estimation({}, RwNoise{}, scenarios::reference_ocv(), cell(), truth_options()), DataError);
}

TEST(RandomWalkTuning, EvaluatesWholeGridAndPicksMinimum) {
    const SynthOutput d = constant_cell(0.005, 4);
    RwOptions o = truth_options();
    o.noise_variance = 25e-6;
    const std::vector<double> grid{1e-8, 1e-6, 1e-4};
    const auto t = tune_random_walk(d.segments, scenarios::reference_ocv(), cell(), o, grid, grid);
    ASSERT_EQ(t.grid.size(), 9u);
    for (const auto& [n, phi] : t.grid) EXPECT_GE(phi, t.best_nlml);
}
