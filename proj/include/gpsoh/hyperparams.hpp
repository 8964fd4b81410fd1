#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"
#include "kernels.hpp"

namespace gpsoh {

/// Learnable GP hyperparameters, stored in natural-log space, plus the fixed
/// affine priors q0 (1/Ah) and r0 (Ohm).
struct HyperParams {
    static constexpr int kCount = 5;
    using Vector = Eigen::Matrix<double, kCount, 1>;

    double log_age_variance = std::log(1e-3);     // sigma_zeta^2, 1/day^3
    double log_spatial_variance = std::log(0.25);  // sigma_s^2
    double log_lengthscale_soc = std::log(0.2);
    double log_lengthscale_current = std::log(1.0);  // A
    double log_noise_variance = std::log(25e-6);   // sigma_v^2, V^2

    double q0 = 1.0 / 0.28;
    double r0 = 0.13;

    static HyperParams natural(double age_variance, double spatial_variance, double lengthscale_soc,
                               double lengthscale_current, double noise_variance, double q0, double r0) {
        detail::require(age_variance > 0 && spatial_variance > 0 && lengthscale_soc > 0 && lengthscale_current > 0 &&
                            noise_variance > 0,
                        "HyperParams: all hyperparameters must be positive");
        HyperParams hp;
        hp.log_age_variance = std::log(age_variance);
        hp.log_spatial_variance = std::log(spatial_variance);
        hp.log_lengthscale_soc = std::log(lengthscale_soc);
        hp.log_lengthscale_current = std::log(lengthscale_current);
        hp.log_noise_variance = std::log(noise_variance);
        hp.q0 = q0;
        hp.r0 = r0;
        return hp;
    }

    double age_variance() const { return std::exp(log_age_variance); }
    double spatial_variance() const { return std::exp(log_spatial_variance); }
    double lengthscale_soc() const { return std::exp(log_lengthscale_soc); }
    double lengthscale_current() const { return std::exp(log_lengthscale_current); }
    double noise_variance() const { return std::exp(log_noise_variance); }

    MaternSpec matern() const {
        return {spatial_variance(), lengthscale_soc(), lengthscale_current(), true};
    }

    Vector log_vector() const {
        Vector v;
        v << log_age_variance, log_spatial_variance, log_lengthscale_soc, log_lengthscale_current, log_noise_variance;
        return v;
    }

    HyperParams with_log_vector(const Vector& v) const {
        HyperParams hp = *this;
        hp.log_age_variance = v(0);
        hp.log_spatial_variance = v(1);
        hp.log_lengthscale_soc = v(2);
        hp.log_lengthscale_current = v(3);
        hp.log_noise_variance = v(4);
        return hp;
    }

    void validate() const {
        if (!log_vector().allFinite()) throw ConfigError("hyperparameters must be finite");
        if (!(q0 > 0.0) || !(r0 > 0.0)) throw ConfigError("q0 and r0 must be positive");
    }

    static constexpr std::array<const char*, kCount> names() {
        return {"age_variance", "spatial_variance", "lengthscale_soc", "lengthscale_current", "noise_variance"};
    }
};

/// Box constraints in log space.
struct HyperBounds {
    HyperParams::Vector lower;
    HyperParams::Vector upper;

    /// +-width natural-log units around the initialization.
    static HyperBounds around(const HyperParams& init, double width = 6.0) {
        HyperBounds b;
        b.lower = init.log_vector().array() - width;
        b.upper = init.log_vector().array() + width;
        return b;
    }

    HyperParams::Vector clamp(const HyperParams::Vector& v) const { return v.cwiseMax(lower).cwiseMin(upper); }

    bool contains(const HyperParams::Vector& v) const {
        return (v.array() >= lower.array()).all() && (v.array() <= upper.array()).all();
    }
};

}  // namespace gpsoh
