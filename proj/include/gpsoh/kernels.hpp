#pragma once

// Covariance functions for the resistance/capacity GPs: Matern-3/2 over the
// operating point (SOC, |current|) and the Wiener-velocity kernel over age.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace gpsoh {

/// Operating condition of the cell. Current is stored as an absolute value.
struct OperatingPoint {
    double soc = 0.0;
    double current = 0.0;
};

struct MaternSpec {
    double variance = 0.25;
    double lengthscale_soc = 0.2;
    double lengthscale_current = 1.0;
    // With a single current level the current axis carries no information
    // and is dropped from the distance.
    bool use_current = true;

    void validate() const {
        detail::require(variance > 0.0 && std::isfinite(variance), "MaternSpec: variance must be positive");
        detail::require(lengthscale_soc > 0.0 && std::isfinite(lengthscale_soc),
                        "MaternSpec: SOC lengthscale must be positive");
        detail::require(lengthscale_current > 0.0 && std::isfinite(lengthscale_current),
                        "MaternSpec: current lengthscale must be positive");
    }
};

struct WienerVelocitySpec {
    double variance = 1e-3;  // spectral density Q_c, per day^3

    static constexpr int state_dim = 2;

    void validate() const {
        detail::require(variance > 0.0 && std::isfinite(variance), "WienerVelocitySpec: variance must be positive");
    }
};

namespace detail {

inline double scaled_distance(const OperatingPoint& a, const OperatingPoint& b, const MaternSpec& spec) {
    const double dz = (a.soc - b.soc) / spec.lengthscale_soc;
    double d2 = dz * dz;
    if (spec.use_current) {
        const double di = (std::abs(a.current) - std::abs(b.current)) / spec.lengthscale_current;
        d2 += di * di;
    }
    return std::sqrt(d2);
}

inline void require_finite(const OperatingPoint& p) {
    if (!std::isfinite(p.soc) || !std::isfinite(p.current))
        throw InvalidArgument("matern32: non-finite operating point");
}

}  // namespace detail

inline double matern32_cov(const OperatingPoint& a, const OperatingPoint& b, const MaternSpec& spec) {
    detail::require_finite(a);
    detail::require_finite(b);
    constexpr double sqrt3 = 1.7320508075688772;
    const double d = detail::scaled_distance(a, b, spec);
    return spec.variance * (1.0 + sqrt3 * d) * std::exp(-sqrt3 * d);
}

/// Partial derivative of k(a, b) with respect to a.soc.
/// The Matern-3/2 kernel is once differentiable, and the d in dk/dd cancels
/// against dd/dz, so this is well defined at a == b (where it is zero).
inline double matern32_dcov_dsoc(const OperatingPoint& a, const OperatingPoint& b, const MaternSpec& spec) {
    detail::require_finite(a);
    detail::require_finite(b);
    constexpr double sqrt3 = 1.7320508075688772;
    const double d = detail::scaled_distance(a, b, spec);
    const double dz = a.soc - b.soc;
    return -3.0 * spec.variance * std::exp(-sqrt3 * d) * dz / (spec.lengthscale_soc * spec.lengthscale_soc);
}

/// Wiener-velocity (once-integrated Brownian motion) covariance in age.
inline double wv_cov(double age, double age_prime, double variance) {
    if (!(age >= 0.0) || !(age_prime >= 0.0)) throw InvalidArgument("wv_cov: ages must be non-negative");
    const double m = std::min(age, age_prime);
    const double gap = std::abs(age - age_prime);
    return variance * (m * m * m / 3.0 + gap * m * m / 2.0);
}

/// Separable product kernel over (operating point, age).
inline double separable_cov(const OperatingPoint& a, double age_a, const OperatingPoint& b, double age_b,
                            const MaternSpec& spatial, double temporal_variance) {
    return matern32_cov(a, b, spatial) * wv_cov(age_a, age_b, temporal_variance);
}

/// Matern covariance matrix over a set of operating points. No jitter is added.
inline Eigen::MatrixXd matern_grid_cov(std::span<const OperatingPoint> grid, const MaternSpec& spec) {
    spec.validate();
    detail::require(!grid.empty(), "matern_grid_cov: empty grid");
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = spec.variance;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = grid[static_cast<std::size_t>(i)];
            const auto& b = grid[static_cast<std::size_t>(j)];
            if (detail::scaled_distance(a, b, spec) == 0.0)
                throw InvalidArgument("matern_grid_cov: duplicate grid points");
            k(i, j) = k(j, i) = matern32_cov(a, b, spec);
        }
    }
    return k;
}

/// Cross-covariance vector k(grid_i, s).
inline Eigen::VectorXd matern_cross_cov(std::span<const OperatingPoint> grid, const OperatingPoint& s,
                                        const MaternSpec& spec) {
    Eigen::VectorXd k(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) k(static_cast<Eigen::Index>(i)) = matern32_cov(grid[i], s, spec);
    return k;
}

/// d/ds.soc of k(grid_i, s).
inline Eigen::VectorXd matern_cross_cov_dsoc(std::span<const OperatingPoint> grid, const OperatingPoint& s,
                                             const MaternSpec& spec) {
    Eigen::VectorXd k(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i)
        k(static_cast<Eigen::Index>(i)) = matern32_dcov_dsoc(s, grid[i], spec);
    return k;
}

}  // namespace gpsoh
