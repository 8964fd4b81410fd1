#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gpsoh/kernels.hpp"
#include "gpsoh/ssm.hpp"
#include "oracles.hpp"

using namespace gpsoh;

TEST(Matern32, IdenticalPointsGiveVariance) {
    MaternSpec spec{2.5, 0.3, 0.7};
    EXPECT_DOUBLE_EQ(matern32_cov({0.4, 1.2}, {0.4, 1.2}, spec), 2.5);
}

TEST(Matern32, ClosedFormValue) {
    MaternSpec spec{1.0, 0.2, 1.0};
    // |dz| / l_z = 1, so d = 1
    const double v = matern32_cov({0.5, 1.0}, {0.3, 1.0}, spec);
    EXPECT_NEAR(v, (1 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0)), 1e-15);
    EXPECT_NEAR(v, 0.483358, 1e-6);
}

TEST(Matern32, MatchesOracleOnRandomPairs) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MaternSpec spec{0.7, 0.15, 0.4};
    for (int k = 0; k < 200; ++k) {
        OperatingPoint a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const double ref = oracle::matern32(a.soc - b.soc, a.current - b.current, 0.7, 0.15, 0.4);
        EXPECT_NEAR(matern32_cov(a, b, spec), ref, 1e-14);
        EXPECT_EQ(matern32_cov(a, b, spec), matern32_cov(b, a, spec));
    }
}

TEST(Matern32, DecaysMonotonicallyBeyondShortRange) {
    MaternSpec spec{1.0, 0.1, 1.0};
    double prev = matern32_cov({0, 0}, {2.0 / std::sqrt(3.0) * 0.1, 0}, spec);
    for (double dz = 0.12; dz < 3.0; dz += 0.05) {
        const double v = matern32_cov({0, 0}, {dz, 0}, spec);
        EXPECT_LT(v, prev);
        EXPECT_GT(v, 0.0);
        prev = v;
    }
    EXPECT_LT(prev, 1e-10);
}

TEST(Matern32, UsesAbsoluteCurrent) {
    MaternSpec spec{1.0, 0.2, 0.5};
    EXPECT_DOUBLE_EQ(matern32_cov({0.2, -0.3}, {0.4, 0.1}, spec), matern32_cov({0.2, 0.3}, {0.4, 0.1}, spec));
}

TEST(Matern32, RejectsNonFinite) {
    MaternSpec spec;
    EXPECT_THROW(matern32_cov({NAN, 0}, {0, 0}, spec), InvalidArgument);
    EXPECT_THROW(matern32_cov({0, 0}, {0, INFINITY}, spec), InvalidArgument);
}

TEST(Matern32, SocDerivativeMatchesFiniteDifference) {
    MaternSpec spec{0.8, 0.2, 0.5};
    const OperatingPoint b{0.45, 0.2};
    for (double z : {0.1, 0.3, 0.44, 0.6, 0.9}) {
        const double h = 1e-6;
        const double fd =
            (matern32_cov({z + h, 0.3}, b, spec) - matern32_cov({z - h, 0.3}, b, spec)) / (2 * h);
        EXPECT_NEAR(matern32_dcov_dsoc({z, 0.3}, b, spec), fd, 1e-7);
    }
    EXPECT_EQ(matern32_dcov_dsoc(b, b, spec), 0.0);
}

TEST(WienerVelocity, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(wv_cov(1, 1, 1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(wv_cov(1, 2, 1), 5.0 / 6.0);
    EXPECT_EQ(wv_cov(3.7, 0, 1), 0.0);
    EXPECT_EQ(wv_cov(0, 3.7, 2), 0.0);
}

TEST(WienerVelocity, SymmetricAndMatchesOracle) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 200.0);
    for (int k = 0; k < 200; ++k) {
        const double a = u(rng), b = u(rng);
        EXPECT_EQ(wv_cov(a, b, 1e-3), wv_cov(b, a, 1e-3));
        EXPECT_NEAR(wv_cov(a, b, 1e-3), oracle::wiener_velocity(a, b, 1e-3), 1e-12 * wv_cov(a, b, 1e-3) + 1e-300);
    }
}

TEST(WienerVelocity, IsNotStationary) { EXPECT_NE(wv_cov(1, 1, 1), wv_cov(2, 2, 1)); }

TEST(WienerVelocity, RejectsNegativeAge) { EXPECT_THROW(wv_cov(-1, 1, 1), InvalidArgument); }

TEST(SeparableKernel, IsElementwiseProduct) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MaternSpec spec{0.3, 0.2, 0.6};
    for (int k = 0; k < 50; ++k) {
        OperatingPoint a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const double ta = 100 * u(rng), tb = 100 * u(rng);
        EXPECT_DOUBLE_EQ(separable_cov(a, ta, b, tb, spec, 2e-3), matern32_cov(a, b, spec) * wv_cov(ta, tb, 2e-3));
    }
}

TEST(MaternGrid, SinglePoint) {
    MaternSpec spec{0.4, 0.2, 1.0};
    const std::vector<OperatingPoint> g{{0.5, 0.1}};
    const Eigen::MatrixXd k = matern_grid_cov(g, spec);
    ASSERT_EQ(k.rows(), 1);
    EXPECT_EQ(k(0, 0), 0.4);
}

TEST(MaternGrid, ThreePointSocGrid) {
    MaternSpec spec{1.7, 0.5, 1.0};
    spec.use_current = false;
    const std::vector<OperatingPoint> g{{0, 0}, {0.5, 0}, {1, 0}};
    const Eigen::MatrixXd k = matern_grid_cov(g, spec);
    // SOC 0 against SOC 1 is two lengthscales apart
    EXPECT_NEAR(k(0, 2) / 1.7, 0.13973, 5e-6);
    EXPECT_NEAR(k(0, 2), 1.7 * (1 + 2 * std::sqrt(3.0)) * std::exp(-2 * std::sqrt(3.0)), 1e-14);
    EXPECT_NEAR(k(0, 1), 1.7 * (1 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0)), 1e-14);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(k(i, i), 1.7);
    EXPECT_EQ((k - k.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MaternGrid, DuplicatePointsRejected) {
    const std::vector<OperatingPoint> g{{0.1, 0}, {0.1, 0}};
    EXPECT_THROW(matern_grid_cov(g, MaternSpec{}), InvalidArgument);
}

TEST(MaternGrid, PositiveSemidefiniteOnLargeGrid) {
    // 200 distinct points on a dense 2-D lattice.
    OperatingGrid grid(40, 5, 0.0, 1.0);
    ASSERT_EQ(grid.size(), 200u);
    MaternSpec spec{0.9, 0.3, 2.0};
    const Eigen::MatrixXd k = matern_grid_cov(grid.points(), spec);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff();
    EXPECT_GE(min_eig, -1e-10 * 0.9);
}
