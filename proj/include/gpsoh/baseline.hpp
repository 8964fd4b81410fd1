#pragma once

// Random-walk dual-estimation benchmark: an EKF on SOC and a separate EKF on
// the scalar parameters (1/Q, R0) driven by random-walk dynamics in age. The
// two filters share innovations but not covariance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecm.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "segment.hpp"
#include "ssm.hpp"

namespace gpsoh {

struct RwNoise {
    double inv_capacity = 1e-6;  // (1/Ah)^2 per day
    double resistance = 1e-6;    // Ohm^2 per day
};

struct RwOptions {
    double q0 = 1.0 / 0.28;
    double r0 = 0.13;
    double inv_capacity_init_rel_std = 0.02;
    double resistance_init_rel_std = 0.25;
    double noise_variance = 25e-6;  // V^2
    SocInit soc_init = SocInit::RestVoltage;
    double soc_init_std = 0.02;
    double rest_current_fraction = 1.0 / 50.0;
    double divergence_zscore = 10.0;
    std::size_t divergence_run = 20;  // consecutive steps above the z-score
};

struct RwParams {
    Eigen::Vector2d theta;  // (1/Q [1/Ah], R0 [Ohm])
    Eigen::Matrix2d cov;
};

struct DualResult {
    HealthEstimate estimate;
    std::vector<RwParams> params;  // at each segment end
    double nlml = 0.0;
    std::size_t diverged_segments = 0;
};

inline DualResult run_dual_estimation(std::span<const Segment> segments, const RwNoise& noise, const OcvCurve& ocv,
                                      const CellConfig& cell, const RwOptions& opt = {}) {
    if (segments.empty()) throw DataError("dual estimation: no segments");
    DualResult res;
    res.estimate.grid = OperatingGrid(cell.n_soc, cell.n_current, cell.current_min, cell.current_max);
    const std::size_t ns = res.estimate.grid.size();

    RwParams p;
    p.theta << opt.q0, opt.r0;
    p.cov.setZero();
    p.cov(0, 0) = std::pow(opt.inv_capacity_init_rel_std * opt.q0, 2);
    p.cov(1, 1) = std::pow(opt.resistance_init_rel_std * opt.r0, 2);
    const Eigen::Vector2d rw(noise.inv_capacity, noise.resistance);
    const Eigen::Vector2d floor(1e-6 * opt.q0, 1e-6 * opt.r0);

    double state_age = segments.front().age_days;
    for (const Segment& seg : segments) {
        seg.validate();
        const double gap = std::max(0.0, seg.age_days - state_age);
        p.cov.diagonal() += rw * gap;
        state_age = std::max(state_age, seg.age_days);

        double imax = 0.0;
        for (double i : seg.current) imax = std::max(imax, std::abs(i));
        double z = 1.0;
        if (opt.soc_init == SocInit::RestVoltage) {
            double v0 = seg.voltage.front();
            if (std::abs(seg.current.front()) >= opt.rest_current_fraction * imax) v0 -= p.theta(1) * seg.current.front();
            z = std::clamp(ocv.invert(v0), 0.0, 1.0);
        }
        double pz = opt.soc_init_std * opt.soc_init_std;
        double dz_dq = 0.0;  // total derivative of z w.r.t. 1/Q
        std::size_t run = 0;
        bool diverged = false;

        for (std::size_t k = 1; k < seg.size(); ++k) {
            const double i = seg.current[k];
            const double dt = seg.time_s[k] - seg.time_s[k - 1];
            const double dt_h = dt / kSecondsPerHour;
            z += p.theta(0) * i * dt_h;
            dz_dq += i * dt_h;
            p.cov.diagonal() += rw * (dt / kSecondsPerDay);
            z = std::clamp(z, -0.05, 1.05);

            const double e = seg.voltage[k] - (ocv(z) + i * p.theta(1));
            const double hz = ocv.derivative(z);
            const Eigen::Vector2d c(hz * dz_dq, i);

            const double sz = hz * hz * pz + opt.noise_variance;
            const double lz = pz * hz / sz;
            const Eigen::Vector2d u = p.cov * c;
            const double st = c.dot(u) + opt.noise_variance;
            if (!(sz > 0.0) || !(st > 0.0) || !std::isfinite(e)) throw NumericalError("dual estimation: invalid innovation");
            const double s_total = hz * hz * pz + c.dot(u) + opt.noise_variance;
            res.nlml += 0.5 * e * e / s_total + 0.5 * std::log(2.0 * std::numbers::pi * s_total);

            z += lz * e;
            pz = (1.0 - lz * hz) * pz;
            const Eigen::Vector2d lt = u / st;
            p.theta += lt * e;
            p.cov -= lt * u.transpose() + u * lt.transpose() - st * lt * lt.transpose();
            p.cov = 0.5 * (p.cov + p.cov.transpose()).eval();
            p.theta = p.theta.cwiseMax(floor);
            dz_dq -= lz * c(0);

            run = std::abs(e) / std::sqrt(s_total) > opt.divergence_zscore ? run + 1 : 0;
            if (run >= opt.divergence_run) diverged = true;
        }
        if (diverged) ++res.diverged_segments;
        state_age += seg.duration_s() / kSecondsPerDay;

        HealthRow row;
        row.age_days = seg.age_days;
        row.inv_capacity_mean = p.theta(0);
        row.capacity_mean = 1.0 / p.theta(0);
        row.capacity_var = p.cov(0, 0) / std::pow(p.theta(0), 4);
        row.r0_mean.assign(ns, p.theta(1));
        row.r0_var.assign(ns, p.cov(1, 1));
        res.estimate.rows.push_back(std::move(row));
        res.params.push_back(p);
    }
    return res;
}

struct RwTuning {
    RwNoise best;
    double best_nlml = std::numeric_limits<double>::infinity();
    std::vector<std::pair<RwNoise, double>> grid;  // every point evaluated
};

/// Coarse grid search of the random-walk magnitudes by the dual filter's NLML.
inline RwTuning tune_random_walk(std::span<const Segment> segments, const OcvCurve& ocv, const CellConfig& cell,
                                 const RwOptions& opt, std::span<const double> rel_inv_capacity = {},
                                 std::span<const double> rel_resistance = {}) {
    static constexpr double kDefaultRel[] = {1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
    if (rel_inv_capacity.empty()) rel_inv_capacity = kDefaultRel;
    if (rel_resistance.empty()) rel_resistance = kDefaultRel;
    RwTuning t;
    for (double a : rel_inv_capacity)
        for (double b : rel_resistance) {
            const RwNoise n{a * opt.q0 * opt.q0, b * opt.r0 * opt.r0};
            double phi = std::numeric_limits<double>::infinity();
            try {
                phi = run_dual_estimation(segments, n, ocv, cell, opt).nlml;
            } catch (const NumericalError&) {
            }
            t.grid.emplace_back(n, phi);
            if (phi < t.best_nlml) {
                t.best_nlml = phi;
                t.best = n;
            }
        }
    if (!std::isfinite(t.best_nlml)) throw NumericalError("random-walk tuning: every grid point failed");
    return t;
}

}  // namespace gpsoh
