#pragma once

// State-space realization of the separable (Matern x Wiener-velocity) GP.
//
// Each GP value carries a (value, d/d-age) pair. Joint GP state ordering:
//   [q, dq, r_0, dr_0, r_1, dr_1, ..., r_{ns-1}, dr_{ns-1}]
// where q is the inverse-capacity block and r_k the resistance at grid point k,
// with grid points in row-major order (SOC-major, current-minor).

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "error.hpp"
#include "kernels.hpp"

namespace gpsoh {

inline Eigen::Matrix2d wv_transition(double dt_days) {
    if (!(dt_days >= 0.0)) throw InvalidArgument("wv_transition: negative interval");
    Eigen::Matrix2d a;
    a << 1.0, dt_days, 0.0, 1.0;
    return a;
}

inline Eigen::Matrix2d wv_process_noise(double dt_days, double variance) {
    if (!(dt_days >= 0.0)) throw InvalidArgument("wv_process_noise: negative interval");
    const double d = dt_days;
    Eigen::Matrix2d w;
    w << d * d * d / 3.0, d * d / 2.0, d * d / 2.0, d;
    return variance * w;
}

/// Prior of the WV state at age0: the process noise accumulated from birth.
inline Eigen::Matrix2d wv_initial_cov(double age0, double variance) {
    if (!(age0 >= 0.0)) throw InvalidArgument("wv_initial_cov: negative age");
    return wv_process_noise(age0, variance);
}

/// Kronecker product of a dense matrix with a 2x2 block.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::Matrix2d& b) {
    Eigen::MatrixXd out(2 * a.rows(), 2 * a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

/// Block-diagonal GP covariance diag(block, K (x) block). Used both for process
/// noise (block = W_WV) and for the initial covariance (block = P_WV(age0)).
inline Eigen::MatrixXd assemble_gp_block(const Eigen::Matrix2d& block, const Eigen::MatrixXd& spatial_cov) {
    if (spatial_cov.rows() != spatial_cov.cols())
        throw InvalidArgument("assemble_gp_block: spatial covariance must be square");
    const Eigen::Index n = 2 + 2 * spatial_cov.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    out.topLeftCorner<2, 2>() = block;
    out.bottomRightCorner(n - 2, n - 2) = kron(spatial_cov, block);
    return out;
}

inline Eigen::MatrixXd assemble_joint_noise(double dt_days, const Eigen::MatrixXd& spatial_cov, double variance) {
    return assemble_gp_block(wv_process_noise(dt_days, variance), spatial_cov);
}

inline Eigen::MatrixXd assemble_initial_cov(double age0, const Eigen::MatrixXd& spatial_cov, double variance) {
    return assemble_gp_block(wv_initial_cov(age0, variance), spatial_cov);
}

/// Transition of the full GP state: I (x) A(dt) (the exponential of a nilpotent F is exact).
inline Eigen::MatrixXd gp_transition(double dt_days, Eigen::Index n_blocks) {
    const Eigen::Matrix2d a = wv_transition(dt_days);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * n_blocks, 2 * n_blocks);
    for (Eigen::Index b = 0; b < n_blocks; ++b) out.block<2, 2>(2 * b, 2 * b) = a;
    return out;
}

/// Evenly spaced operating grid: SOC over [0, 1], |current| over [min, max].
class OperatingGrid {
public:
    OperatingGrid() = default;

    OperatingGrid(int n_soc, int n_current, double current_min, double current_max)
        : n_soc_(n_soc), n_current_(n_current) {
        detail::require(n_soc >= 2, "OperatingGrid: need at least two SOC levels");
        detail::require(n_current >= 1, "OperatingGrid: need at least one current level");
        current_min = std::abs(current_min);
        current_max = std::abs(current_max);
        if (current_min > current_max) std::swap(current_min, current_max);
        detail::require(n_current == 1 || current_max > current_min,
                        "OperatingGrid: current range must be non-degenerate for n_current > 1");
        for (int iz = 0; iz < n_soc; ++iz) {
            const double z = static_cast<double>(iz) / (n_soc - 1);
            for (int ii = 0; ii < n_current; ++ii) {
                const double c = n_current == 1 ? 0.5 * (current_min + current_max)
                                                : current_min + (current_max - current_min) * ii / (n_current - 1);
                points_.push_back({z, c});
            }
        }
    }

    int n_soc() const { return n_soc_; }
    int n_current() const { return n_current_; }
    std::size_t size() const { return points_.size(); }
    std::span<const OperatingPoint> points() const { return points_; }
    const OperatingPoint& operator[](std::size_t k) const { return points_[k]; }
    std::size_t index(int iz, int ii) const { return static_cast<std::size_t>(iz * n_current_ + ii); }

    /// Level values along each axis.
    std::vector<double> soc_levels() const {
        std::vector<double> out;
        for (int iz = 0; iz < n_soc_; ++iz) out.push_back(points_[index(iz, 0)].soc);
        return out;
    }
    std::vector<double> current_levels() const {
        std::vector<double> out;
        for (int ii = 0; ii < n_current_; ++ii) out.push_back(points_[index(0, ii)].current);
        return out;
    }

private:
    int n_soc_ = 0;
    int n_current_ = 0;
    std::vector<OperatingPoint> points_;
};

/// Gridded Matern prior with its factorization; provides off-grid readout weights.
class SpatialModel {
public:
    static constexpr double kRelativeJitter = 1e-8;

    SpatialModel(OperatingGrid grid, MaternSpec spec) : grid_(std::move(grid)), spec_(spec) {
        spec_.use_current = spec_.use_current && grid_.n_current() > 1;
        spec_.validate();
        jitter_ = kRelativeJitter * spec_.variance;
        k_ = matern_grid_cov(grid_.points(), spec_);
        k_.diagonal().array() += jitter_;
        llt_.compute(k_);
        if (llt_.info() != Eigen::Success) throw NumericalError("SpatialModel: Matern covariance not factorizable");
    }

    const OperatingGrid& grid() const { return grid_; }
    const MaternSpec& spec() const { return spec_; }
    /// Jittered spatial covariance K_Mat.
    const Eigen::MatrixXd& cov() const { return k_; }
    double jitter() const { return jitter_; }

    /// w(s) = K^-1 k(grid, s).
    Eigen::VectorXd weights(const OperatingPoint& s) const { return llt_.solve(matern_cross_cov(grid_.points(), s, spec_)); }

    /// dw/dz at s.
    Eigen::VectorXd weights_dsoc(const OperatingPoint& s) const {
        return llt_.solve(matern_cross_cov_dsoc(grid_.points(), s, spec_));
    }

    /// Interpolation residual k(s,s) - k^T K^-1 k, the spatial variance not captured by grid values.
    double residual_variance(const OperatingPoint& s) const {
        const Eigen::VectorXd k = matern_cross_cov(grid_.points(), s, spec_);
        const double v = spec_.variance - k.dot(llt_.solve(k));
        return std::max(0.0, v);
    }

private:
    OperatingGrid grid_;
    MaternSpec spec_;
    double jitter_ = 0.0;
    Eigen::MatrixXd k_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct BatchPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double nlml = 0.0;  // -log p(y | X) of the training targets
};

/// Exact GP regression with a zero prior mean: posterior at test inputs plus the
/// negative log marginal likelihood of the training data. O(n^3); meant as a
/// reference for the recursive filter, not for production use.
template <typename Input, typename Kernel>
BatchPosterior batch_gp_posterior(std::span<const Input> train, const Eigen::VectorXd& targets, Kernel&& kernel,
                                  double noise_var, std::span<const Input> test) {
    detail::require(noise_var > 0.0, "batch_gp_posterior: noise variance must be positive");
    detail::require(static_cast<Eigen::Index>(train.size()) == targets.size(),
                    "batch_gp_posterior: inputs and targets differ in length");
    const auto n = static_cast<Eigen::Index>(train.size());
    const auto m = static_cast<Eigen::Index>(test.size());

    Eigen::MatrixXd kss(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) kss(i, j) = kernel(test[i], test[j]);

    BatchPosterior out;
    if (n == 0) {
        out.mean = Eigen::VectorXd::Zero(m);
        out.cov = kss;
        return out;
    }

    Eigen::MatrixXd kxx(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) kxx(i, j) = kernel(train[i], train[j]);
    kxx.diagonal().array() += noise_var;

    Eigen::MatrixXd kxs(n, m);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) kxs(i, j) = kernel(train[i], test[j]);

    Eigen::LLT<Eigen::MatrixXd> llt(kxx);
    if (llt.info() != Eigen::Success) throw NumericalError("batch_gp_posterior: singular training covariance");

    const Eigen::VectorXd alpha = llt.solve(targets);
    out.mean = kxs.transpose() * alpha;
    out.cov = kss - kxs.transpose() * llt.solve(kxs);

    const Eigen::MatrixXd l = llt.matrixL();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    out.nlml = 0.5 * targets.dot(alpha) + 0.5 * logdet + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return out;
}

}  // namespace gpsoh
