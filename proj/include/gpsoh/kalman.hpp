#pragma once

// Linear-Gaussian building blocks shared by the co-estimator, the GP-only
// filters, and the baseline: scalar-measurement update and RTS smoothing.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace gpsoh {

struct GaussianState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Covariance update form after a scalar measurement.
///  Joseph:    (I - L h^T) P (I - L h^T)^T + L R L^T
///  AsPrinted: (I - L h^T)^T P (I - L h^T) + L e L^T   (kept for diagnostics only;
///             it is not a valid covariance update and can lose definiteness)
enum class CovarianceUpdate { Joseph, AsPrinted };

struct ScalarUpdate {
    double innovation = 0.0;
    double innovation_var = 0.0;
    double nlml = 0.0;        // 0.5 e^2/S + 0.5 log(2 pi S)
    double asymmetry = 0.0;   // max |P - P^T| before re-symmetrization
};

/// Scalar Kalman update in O(n^2). `noise_var` is everything in S that is not h^T P h.
inline ScalarUpdate scalar_update(GaussianState& state, const Eigen::VectorXd& h, double innovation, double noise_var,
                                  CovarianceUpdate form = CovarianceUpdate::Joseph) {
    Eigen::MatrixXd& p = state.cov;
    const Eigen::VectorXd u = p * h;
    const double hph = h.dot(u);
    const double s = hph + noise_var;
    if (!std::isfinite(s) || !(s > 0.0)) throw NumericalError("scalar_update: innovation variance is not positive");
    if (!std::isfinite(innovation)) throw NumericalError("scalar_update: non-finite innovation");

    const Eigen::VectorXd gain = u / s;
    state.mean += gain * innovation;

    if (form == CovarianceUpdate::Joseph) {
        p.noalias() -= gain * u.transpose();
        p.noalias() -= u * gain.transpose();
        p.noalias() += (hph + noise_var) * gain * gain.transpose();
    } else {
        const Eigen::VectorXd v = p * gain;
        const double lpl = gain.dot(v);
        p.noalias() -= h * v.transpose();
        p.noalias() -= v * h.transpose();
        p.noalias() += lpl * h * h.transpose();
        p.noalias() += innovation * gain * gain.transpose();
    }

    ScalarUpdate out;
    out.asymmetry = (p - p.transpose()).cwiseAbs().maxCoeff();
    p = 0.5 * (p + p.transpose()).eval();
    out.innovation = innovation;
    out.innovation_var = s;
    out.nlml = 0.5 * innovation * innovation / s + 0.5 * std::log(2.0 * std::numbers::pi * s);
    if (!state.mean.allFinite()) throw NumericalError("scalar_update: state became non-finite");
    return out;
}

/// Linear prediction x <- A x, P <- A P A^T + W.
inline void linear_predict(GaussianState& state, const Eigen::MatrixXd& a, const Eigen::MatrixXd& w) {
    state.mean = a * state.mean;
    state.cov = a * state.cov * a.transpose() + w;
    state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
}

/// Fixed-interval Rauch-Tung-Striebel smoother.
///   filtered[k]   : posterior at step k given data up to k
///   predicted[k]  : prior at step k given data up to k-1 (predicted[0] unused)
///   transition[k] : A mapping step k-1 to step k (transition[0] unused)
inline std::vector<GaussianState> rts_smooth(const std::vector<GaussianState>& filtered,
                                             const std::vector<GaussianState>& predicted,
                                             const std::vector<Eigen::MatrixXd>& transition) {
    const std::size_t n = filtered.size();
    if (predicted.size() != n || transition.size() != n)
        throw InvalidArgument("rts_smooth: filtered, predicted and transition sequences differ in length");
    std::vector<GaussianState> smoothed(filtered);
    if (n < 2) return smoothed;
    for (std::size_t k = n - 1; k-- > 0;) {
        const auto& f = filtered[k];
        const auto& pr = predicted[k + 1];
        const Eigen::MatrixXd& a = transition[k + 1];
        if (f.cov.size() == 0 || pr.cov.size() == 0) throw InvalidArgument("rts_smooth: missing stored covariance");
        // G = P_f A^T (P^-)^-1, via a symmetric solve.
        const Eigen::MatrixXd cross = a * f.cov;
        const Eigen::MatrixXd g = pr.cov.ldlt().solve(cross).transpose();
        auto& s = smoothed[k];
        s.mean = f.mean + g * (smoothed[k + 1].mean - pr.mean);
        s.cov = f.cov + g * (smoothed[k + 1].cov - pr.cov) * g.transpose();
        s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
    }
    return smoothed;
}

}  // namespace gpsoh
