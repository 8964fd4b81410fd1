#pragma once

// Outer maximum-likelihood loop: minimize the accumulated NLML over the
// log-hyperparameters with a box-constrained (projected) L-BFGS and central
// finite-difference gradients.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecm.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "hyperparams.hpp"
#include "segment.hpp"

namespace gpsoh {

/// Accumulated NLML of one forward co-estimation pass; +inf when the filter breaks down.
inline double nlml_objective(const HyperParams& hp, std::span<const Segment> segments, const CellConfig& cell,
                             const OcvCurve& ocv, EstimatorOptions options = {}) {
    options.record_innovations = false;
    // file order is irrelevant; only the age stamps are
    std::vector<Segment> sorted;
    if (!std::is_sorted(segments.begin(), segments.end(),
                        [](const Segment& a, const Segment& b) { return a.age_days < b.age_days; })) {
        sorted.assign(segments.begin(), segments.end());
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const Segment& a, const Segment& b) { return a.age_days < b.age_days; });
        segments = sorted;
    }
    try {
        const double phi = CoEstimator(hp, cell, ocv, options).run(segments).diagnostics.nlml;
        return std::isfinite(phi) ? phi : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
}

struct OptimizerOptions {
    std::size_t budget = 60;         // objective evaluations
    double fd_step = 1e-3;           // log-space central-difference step
    std::size_t memory = 5;
    double gradient_tolerance = 1e-5;
    double relative_tolerance = 1e-10;
    double max_step = 3.0;           // log units per iteration
    int max_backtracks = 8;
};

struct TraceRow {
    std::size_t evaluation = 0;
    std::size_t iteration = 0;
    Eigen::VectorXd x;
    double value = 0.0;
    double best = 0.0;
    double wall_s = 0.0;
};

struct OptimizationResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    std::vector<TraceRow> trace;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Minimizes `f` over the box [lower, upper]. Every evaluation is appended to
/// the trace; the best point seen is returned.
inline OptimizationResult minimize_box(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                       const OptimizerOptions& opt = {}) {
    if (opt.budget < 1) throw InvalidArgument("optimize: budget must be at least one evaluation");
    const Eigen::Index n = x0.size();
    const auto clock0 = std::chrono::steady_clock::now();
    OptimizationResult res;
    std::size_t iteration = 0;

    auto project = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.cwiseMax(lower).cwiseMin(upper); };
    auto eval = [&](const Eigen::VectorXd& x) {
        const double v = f(x);
        const double value = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        if (value < res.value) {
            res.value = value;
            res.x = x;
        }
        TraceRow row;
        row.evaluation = res.trace.size();
        row.iteration = iteration;
        row.x = x;
        row.value = value;
        row.best = res.value;
        row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
        res.trace.push_back(std::move(row));
        return value;
    };
    auto remaining = [&] { return opt.budget - res.trace.size(); };

    Eigen::VectorXd x = project(x0);
    double fx = eval(x);
    if (!std::isfinite(fx)) {
        // No feasible start; the caller sees the trace in the error path.
        throw NumericalError("optimize: objective infeasible at the initial point");
    }

    auto gradient = [&](const Eigen::VectorXd& at, Eigen::VectorXd& g) -> bool {
        g.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (remaining() < 2) return false;
            Eigen::VectorXd xp = at, xm = at;
            xp(i) = std::min(at(i) + opt.fd_step, upper(i));
            xm(i) = std::max(at(i) - opt.fd_step, lower(i));
            const double fp = eval(xp), fm = eval(xm);
            if (!std::isfinite(fp) || !std::isfinite(fm) || xp(i) == xm(i)) {
                g(i) = 0.0;
                continue;
            }
            g(i) = (fp - fm) / (xp(i) - xm(i));
        }
        return true;
    };

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;  // (s, y)
    Eigen::VectorXd g;
    if (!gradient(x, g)) return res;

    while (remaining() > 0) {
        ++iteration;
        // free variables: not pinned at a bound with the gradient pushing outward
        Eigen::VectorXd pg = g;
        for (Eigen::Index i = 0; i < n; ++i)
            if ((x(i) <= lower(i) && g(i) > 0) || (x(i) >= upper(i) && g(i) < 0)) pg(i) = 0.0;
        if (pg.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
            res.converged = true;
            break;
        }

        // L-BFGS two-loop recursion on the projected gradient
        Eigen::VectorXd d = pg;
        std::vector<double> alpha(history.size());
        for (std::size_t k = history.size(); k-- > 0;) {
            const auto& [s, y] = history[k];
            alpha[k] = s.dot(d) / y.dot(s);
            d -= alpha[k] * y;
        }
        if (!history.empty()) {
            const auto& [s, y] = history.back();
            d *= s.dot(y) / y.dot(y);
        }
        for (std::size_t k = 0; k < history.size(); ++k) {
            const auto& [s, y] = history[k];
            const double beta = y.dot(d) / y.dot(s);
            d += s * (alpha[k] - beta);
        }
        d = -d;
        for (Eigen::Index i = 0; i < n; ++i)
            if (pg(i) == 0.0) d(i) = 0.0;
        if (d.dot(pg) >= 0.0) {
            d = -pg;
            history.clear();
        }
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > opt.max_step) d *= opt.max_step / dn;

        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd xn;
        double fn = fx;
        for (int bt = 0; bt <= opt.max_backtracks && remaining() > 0; ++bt, step *= 0.5) {
            xn = project(x + step * d);
            if ((xn - x).lpNorm<Eigen::Infinity>() == 0.0) break;
            fn = eval(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = history.empty();
            if (history.empty()) break;
            history.clear();  // retry once with steepest descent
            continue;
        }
        const double rel = std::abs(fx - fn) / std::max(1.0, std::abs(fx));
        Eigen::VectorXd gn;
        const Eigen::VectorXd s = xn - x;
        x = xn;
        fx = fn;
        if (rel < opt.relative_tolerance) {
            res.converged = true;
            break;
        }
        if (!gradient(x, gn)) break;
        const Eigen::VectorXd y = gn - g;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            history.emplace_back(s, y);
            if (history.size() > opt.memory) history.pop_front();
        }
        g = gn;
    }
    res.iterations = iteration;
    return res;
}

struct FitResult {
    HyperParams hp;
    double nlml = 0.0;
    double initial_nlml = 0.0;
    OptimizationResult optimization;
};

/// Maximum-likelihood hyperparameters for the co-estimator on `segments`.
inline FitResult optimize(const HyperParams& init, const HyperBounds& bounds, std::span<const Segment> segments,
                          const CellConfig& cell, const OcvCurve& ocv, const OptimizerOptions& opt = {},
                          const EstimatorOptions& est = {}) {
    auto objective = [&](const Eigen::VectorXd& v) {
        return nlml_objective(init.with_log_vector(v), segments, cell, ocv, est);
    };
    FitResult out;
    out.optimization = minimize_box(objective, init.log_vector(), bounds.lower, bounds.upper, opt);
    out.hp = init.with_log_vector(out.optimization.x);
    out.nlml = out.optimization.value;
    out.initial_nlml = out.optimization.trace.front().value;
    return out;
}

/// Data-driven starting point: sigma_v^2 from second differences of the
/// voltage (white noise gives var(d2V) = 6 sigma^2), fixed defaults otherwise.
inline HyperParams initial_hyperparams(std::span<const Segment> segments, const CellConfig& cell) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& s : segments)
        for (std::size_t k = 2; k < s.size(); ++k) {
            const double d2 = s.voltage[k] - 2 * s.voltage[k - 1] + s.voltage[k - 2];
            acc += d2 * d2;
            ++n;
        }
    const double noise = n > 0 ? std::max(acc / (6.0 * n), 1e-8) : 1e-5;
    const double half_range = std::max(0.5 * std::abs(std::abs(cell.current_max) - std::abs(cell.current_min)), 1e-2);
    return HyperParams::natural(1e-3, 0.25, 0.2, half_range, noise, cell.q0, cell.r0);
}

}  // namespace gpsoh
