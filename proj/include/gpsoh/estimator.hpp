#pragma once

// Joint EKF co-estimation of SOC and the state-space GPs for inverse capacity
// and the gridded resistance surface.
//
// Joint state ordering: [z, q, dq, r_0, dr_0, ..., r_{ns-1}, dr_{ns-1}].
// Within a segment all states propagate together on the seconds timescale;
// between segments only the GP part carries over and z is re-initialized.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ecm.hpp"
#include "error.hpp"
#include "hyperparams.hpp"
#include "kalman.hpp"
#include "kernels.hpp"
#include "segment.hpp"
#include "ssm.hpp"

namespace gpsoh {

/// Linear WV dynamics of a stack of GP values that share one temporal kernel.
/// `block_cov` couples the stacked values (identity-free): the process noise is
/// block_cov (x) W_WV(dt) and the prior is block_cov (x) P_WV(age0).
class GpDynamics {
public:
    GpDynamics() = default;
    GpDynamics(Eigen::MatrixXd block_cov, double age_variance)
        : block_cov_(std::move(block_cov)), age_variance_(age_variance) {
        detail::require(block_cov_.rows() == block_cov_.cols() && block_cov_.rows() > 0,
                        "GpDynamics: block covariance must be square and nonempty");
        detail::require(age_variance_ > 0.0, "GpDynamics: age variance must be positive");
    }

    Eigen::Index blocks() const { return block_cov_.rows(); }
    Eigen::Index dim() const { return 2 * block_cov_.rows(); }
    double age_variance() const { return age_variance_; }
    const Eigen::MatrixXd& block_cov() const { return block_cov_; }

    GaussianState prior(double age0) const {
        return {Eigen::VectorXd::Zero(dim()), kron(block_cov_, wv_initial_cov(age0, age_variance_))};
    }

    Eigen::MatrixXd transition(double dt_days) const { return gp_transition(dt_days, blocks()); }
    Eigen::MatrixXd noise(double dt_days) const { return kron(block_cov_, wv_process_noise(dt_days, age_variance_)); }

    /// In-place propagation of the GP sub-vector/sub-matrix starting at `offset`
    /// of a larger state. O(n^2).
    void propagate(Eigen::VectorXd& mean, Eigen::MatrixXd& cov, double dt_days, Eigen::Index offset = 0) const {
        if (!(dt_days >= 0.0)) throw InvalidArgument("GpDynamics: negative interval");
        if (dt_days == 0.0) return;
        const Eigen::Index nb = blocks();
        for (Eigen::Index b = 0; b < nb; ++b) mean(offset + 2 * b) += dt_days * mean(offset + 2 * b + 1);
        // rows then columns of (I (x) A) on the GP range
        for (Eigen::Index b = 0; b < nb; ++b) cov.row(offset + 2 * b) += dt_days * cov.row(offset + 2 * b + 1);
        for (Eigen::Index b = 0; b < nb; ++b) cov.col(offset + 2 * b) += dt_days * cov.col(offset + 2 * b + 1);
        add_noise(cov, dt_days, offset);
    }

    void propagate(GaussianState& s, double dt_days) const { propagate(s.mean, s.cov, dt_days, 0); }

    void add_noise(Eigen::MatrixXd& cov, double dt_days, Eigen::Index offset = 0) const {
        const Eigen::Matrix2d w = wv_process_noise(dt_days, age_variance_);
        const Eigen::Index nb = blocks();
        for (Eigen::Index j = 0; j < nb; ++j)
            for (Eigen::Index i = 0; i < nb; ++i) {
                const double c = block_cov_(i, j);
                if (c != 0.0) cov.block<2, 2>(offset + 2 * i, offset + 2 * j) += c * w;
            }
    }

private:
    Eigen::MatrixXd block_cov_;
    double age_variance_ = 1.0;
};

/// GP state at one aging step, kept for smoothing and prediction.
struct GpSnapshot {
    double age_days = 0.0;      // nominal age of the data (segment start)
    double state_age_days = 0.0;  // age the GP state refers to (segment end)
    GaussianState gp;
};

struct HealthRow {
    double age_days = 0.0;
    bool extrapolated = false;
    double inv_capacity_mean = 0.0;  // 1/Ah
    double capacity_mean = 0.0;      // Ah
    double capacity_var = 0.0;       // Ah^2, first-order propagated
    std::vector<double> r0_mean;     // Ohm, one per grid point
    std::vector<double> r0_var;      // Ohm^2
};

/// Posterior health trajectory on the operating grid.
struct HealthEstimate {
    OperatingGrid grid;
    std::vector<HealthRow> rows;

    std::vector<double> ages() const {
        std::vector<double> a;
        for (const auto& r : rows) a.push_back(r.age_days);
        return a;
    }
    std::vector<double> capacities() const {
        std::vector<double> c;
        for (const auto& r : rows) c.push_back(r.capacity_mean);
        return c;
    }
};

struct FilterDiagnostics {
    double nlml = 0.0;
    std::size_t steps = 0;
    std::vector<double> innovations;
    std::vector<double> innovation_vars;
    std::vector<double> segment_nlml;
    std::size_t soc_clamps = 0;
    std::size_t ocv_out_of_range = 0;
    std::size_t psd_checks = 0;
    std::size_t psd_repairs = 0;
    double max_asymmetry = 0.0;
    double min_eig_ratio = std::numeric_limits<double>::infinity();  // min eig / trace

    /// Repair fired on more than 0.1% of steps.
    bool repair_flag() const { return steps > 0 && psd_repairs * 1000 > steps; }

    void merge(const FilterDiagnostics& o) {
        nlml += o.nlml;
        steps += o.steps;
        innovations.insert(innovations.end(), o.innovations.begin(), o.innovations.end());
        innovation_vars.insert(innovation_vars.end(), o.innovation_vars.begin(), o.innovation_vars.end());
        segment_nlml.insert(segment_nlml.end(), o.segment_nlml.begin(), o.segment_nlml.end());
        soc_clamps += o.soc_clamps;
        ocv_out_of_range += o.ocv_out_of_range;
        psd_checks += o.psd_checks;
        psd_repairs += o.psd_repairs;
        max_asymmetry = std::max(max_asymmetry, o.max_asymmetry);
        min_eig_ratio = std::min(min_eig_ratio, o.min_eig_ratio);
    }
};

enum class SocInit {
    RestVoltage,  // invert the OCV at the first sample (IR-corrected if not at rest)
    Full,         // z0 = 1, e.g. after a CV hold
};

struct EstimatorOptions {
    SocInit soc_init = SocInit::RestVoltage;
    double soc_init_std = 0.02;
    double soc_process_var = 0.0;     // W_z per step
    double min_initial_age = 1.0;     // days; keeps the WV prior non-degenerate
    double soc_clamp_low = -0.05;
    double soc_clamp_high = 1.05;
    double rest_current_fraction = 1.0 / 50.0;
    bool input_uncertainty = true;    // first-order SOC-uncertainty term in the R0 variance
    CovarianceUpdate covariance_update = CovarianceUpdate::Joseph;
    std::size_t eig_check_stride = 0;  // 0: check only at segment ends
    bool record_innovations = true;
};

struct JointState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    static constexpr Eigen::Index kSoc = 0;
    static constexpr Eigen::Index kGp = 1;  // start of the GP block

    double soc() const { return mean(kSoc); }
    double soc_var() const { return cov(kSoc, kSoc); }
    double q() const { return mean(kGp); }
    static Eigen::Index r_index(Eigen::Index k) { return kGp + 2 + 2 * k; }

    GaussianState gp() const {
        const Eigen::Index n = mean.size() - kGp;
        return {mean.tail(n), cov.bottomRightCorner(n, n)};
    }
};

/// R0 at an operating point, split by variance source.
struct R0Readout {
    double mean = 0.0;             // Ohm
    double dmean_dsoc = 0.0;       // Ohm per SOC unit
    double state_var = 0.0;        // from uncertainty of the grid values
    double interpolation_var = 0.0;  // off-grid residual of the Matern interpolation
    double input_var = 0.0;        // first-order SOC-input uncertainty
    double total_var() const { return state_var + interpolation_var + input_var; }
};

struct StepResult {
    double innovation = 0.0;
    double innovation_var = 0.0;
    double nlml = 0.0;
    double predicted_voltage = 0.0;
};

struct CoestimationResult {
    HealthEstimate estimate;  // filtered, one row per segment
    FilterDiagnostics diagnostics;
    std::vector<GpSnapshot> snapshots;
};

class CoEstimator {
public:
    CoEstimator(HyperParams hp, CellConfig cell, OcvCurve ocv, EstimatorOptions options = {})
        : hp_(hp),
          cell_(cell),
          ocv_(std::move(ocv)),
          options_(options),
          spatial_(OperatingGrid(cell.n_soc, cell.n_current, cell.current_min, cell.current_max), hp.matern()) {
        hp_.validate();
        cell_.validate();
        const Eigen::Index ns = static_cast<Eigen::Index>(spatial_.grid().size());
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(ns + 1, ns + 1);
        block(0, 0) = 1.0;
        block.bottomRightCorner(ns, ns) = spatial_.cov();
        dynamics_ = GpDynamics(std::move(block), hp_.age_variance());
    }

    const HyperParams& hyperparams() const { return hp_; }
    const CellConfig& cell() const { return cell_; }
    const OcvCurve& ocv() const { return ocv_; }
    const EstimatorOptions& options() const { return options_; }
    const SpatialModel& spatial() const { return spatial_; }
    const GpDynamics& dynamics() const { return dynamics_; }
    Eigen::Index grid_size() const { return static_cast<Eigen::Index>(spatial_.grid().size()); }
    Eigen::Index state_dim() const { return 1 + dynamics_.dim(); }

    GaussianState initial_gp(double age0) const { return dynamics_.prior(std::max(age0, options_.min_initial_age)); }

    JointState start_segment(const GaussianState& gp, double soc0, double soc_var) const {
        JointState j;
        const Eigen::Index n = 1 + gp.mean.size();
        j.mean = Eigen::VectorXd::Zero(n);
        j.cov = Eigen::MatrixXd::Zero(n, n);
        j.mean(JointState::kSoc) = soc0;
        j.mean.tail(gp.mean.size()) = gp.mean;
        j.cov(0, 0) = soc_var;
        j.cov.bottomRightCorner(n - 1, n - 1) = gp.cov;
        return j;
    }

    /// Initial SOC of a segment from its first sample.
    double initial_soc(const Segment& seg) const {
        if (options_.soc_init == SocInit::Full) return 1.0;
        double imax = 0.0;
        for (double i : seg.current) imax = std::max(imax, std::abs(i));
        const double i0 = seg.current.front();
        double v = seg.voltage.front();
        if (std::abs(i0) >= options_.rest_current_fraction * imax) v -= cell_.r0 * i0;
        return std::clamp(ocv_.invert(v), 0.0, 1.0);
    }

    /// Off-grid readout weights w(s) = K^-1 k(grid, s).
    Eigen::VectorXd spatial_weights(double soc, double current) const {
        return spatial_.weights({soc, std::abs(current)});
    }

    R0Readout evaluate_r0(const JointState& joint, double soc, double current) const {
        const OperatingPoint s{soc, std::abs(current)};
        const Eigen::VectorXd w = spatial_.weights(s);
        const Eigen::VectorXd dw = spatial_.weights_dsoc(s);
        const Eigen::Index ns = grid_size();
        const double r0 = hp_.r0;

        double rw = 0.0, rdw = 0.0;
        for (Eigen::Index k = 0; k < ns; ++k) {
            const double rk = joint.mean(JointState::r_index(k));
            rw += w(k) * rk;
            rdw += dw(k) * rk;
        }
        R0Readout out;
        out.mean = r0 * (1.0 + rw);
        out.dmean_dsoc = r0 * rdw;
        double sv = 0.0;
        for (Eigen::Index a = 0; a < ns; ++a)
            for (Eigen::Index b = 0; b < ns; ++b)
                sv += w(a) * w(b) * joint.cov(JointState::r_index(a), JointState::r_index(b));
        out.state_var = std::max(0.0, r0 * r0 * sv);
        out.interpolation_var = r0 * r0 * spatial_.residual_variance(s);
        out.input_var = options_.input_uncertainty ? out.dmean_dsoc * out.dmean_dsoc * joint.soc_var() : 0.0;
        return out;
    }

    /// One propagate + update step with current `current` over `dt_s` seconds and measured `voltage`.
    StepResult step(JointState& joint, double current, double dt_s, double voltage, FilterDiagnostics& diag) const {
        if (!(dt_s > 0.0)) throw InvalidArgument("ekf step: time step must be positive");
        predict(joint, current, dt_s, diag);
        return update(joint, current, voltage, diag);
    }

    /// Propagation only: Coulomb counting on z, WV micro-propagation of the GP states.
    void predict(JointState& joint, double current, double dt_s, FilterDiagnostics& diag) const {
        auto& x = joint.mean;
        auto& p = joint.cov;
        const double dt_h = dt_s / kSecondsPerHour;
        const double coupling = hp_.q0 * current * dt_h;  // dz/dq
        x(JointState::kSoc) += hp_.q0 * (1.0 + x(JointState::kGp)) * current * dt_h;
        p.row(JointState::kSoc) += coupling * p.row(JointState::kGp);
        p.col(JointState::kSoc) += coupling * p.col(JointState::kGp);
        p(JointState::kSoc, JointState::kSoc) += options_.soc_process_var;
        dynamics_.propagate(x, p, dt_s / kSecondsPerDay, JointState::kGp);
        clamp_soc(joint, diag);
    }

    StepResult update(JointState& joint, double current, double voltage, FilterDiagnostics& diag) const {
        const double z = joint.soc();
        if (!ocv_.in_range(z)) ++diag.ocv_out_of_range;
        const R0Readout r = evaluate_r0(joint, z, current);
        const OperatingPoint s{z, std::abs(current)};
        const Eigen::VectorXd w = spatial_.weights(s);

        Eigen::VectorXd h = Eigen::VectorXd::Zero(state_dim());
        h(JointState::kSoc) = ocv_.derivative(z) + current * r.dmean_dsoc;
        for (Eigen::Index k = 0; k < grid_size(); ++k) h(JointState::r_index(k)) = current * hp_.r0 * w(k);

        StepResult out;
        out.predicted_voltage = ocv_(z) + current * r.mean;
        const double extra_var = current * current * (r.interpolation_var + r.input_var) + hp_.noise_variance();
        GaussianState gs{std::move(joint.mean), std::move(joint.cov)};
        const ScalarUpdate u = scalar_update(gs, h, voltage - out.predicted_voltage, extra_var, options_.covariance_update);
        joint.mean = std::move(gs.mean);
        joint.cov = std::move(gs.cov);

        out.innovation = u.innovation;
        out.innovation_var = u.innovation_var;
        out.nlml = u.nlml;
        diag.nlml += u.nlml;
        ++diag.steps;
        diag.max_asymmetry = std::max(diag.max_asymmetry, u.asymmetry);
        if (options_.record_innovations) {
            diag.innovations.push_back(u.innovation);
            diag.innovation_vars.push_back(u.innovation_var);
        }
        clamp_soc(joint, diag);
        if (options_.eig_check_stride > 0 && diag.steps % options_.eig_check_stride == 0) check_psd(joint.cov, diag);
        return out;
    }

    /// Filters one segment starting from the GP prior `gp` (already propagated to the segment age).
    /// Returns the GP posterior at the segment end.
    GaussianState filter_segment(const Segment& seg, const GaussianState& gp, FilterDiagnostics& diag) const {
        seg.validate();
        const double soc_var = options_.soc_init_std * options_.soc_init_std;
        JointState joint = start_segment(gp, initial_soc(seg), soc_var);
        const double before = diag.nlml;
        for (std::size_t k = 1; k < seg.size(); ++k)
            step(joint, seg.current[k], seg.time_s[k] - seg.time_s[k - 1], seg.voltage[k], diag);
        diag.segment_nlml.push_back(diag.nlml - before);
        check_psd(joint.cov, diag);
        return joint.gp();
    }

    /// Full forward pass over `segments` (sorted by age). When `start` is given the
    /// run continues from that snapshot instead of the prior.
    CoestimationResult run(std::span<const Segment> segments, const std::optional<GpSnapshot>& start = std::nullopt) const {
        if (segments.empty()) throw DataError("co-estimation: no segments");
        for (std::size_t j = 1; j < segments.size(); ++j)
            if (segments[j].age_days < segments[j - 1].age_days) throw DataError("co-estimation: segment ages not monotone");

        CoestimationResult res;
        res.estimate.grid = spatial_.grid();
        GaussianState gp;
        double state_age;
        if (start) {
            gp = start->gp;
            state_age = start->state_age_days;
        } else {
            state_age = std::max(segments.front().age_days, options_.min_initial_age);
            gp = dynamics_.prior(state_age);
        }
        for (const Segment& seg : segments) {
            const double gap = std::max(0.0, seg.age_days - state_age);
            dynamics_.propagate(gp, gap);
            state_age += gap;
            gp = filter_segment(seg, gp, res.diagnostics);
            state_age += seg.duration_s() / kSecondsPerDay;
            GpSnapshot snap{seg.age_days, state_age, gp};
            res.estimate.rows.push_back(health_row(snap.gp, seg.age_days, false));
            res.snapshots.push_back(std::move(snap));
        }
        return res;
    }

    HealthRow health_row(const GaussianState& gp, double age, bool extrapolated) const {
        HealthRow row;
        row.age_days = age;
        row.extrapolated = extrapolated;
        const double q = gp.mean(0);
        const double qv = std::max(0.0, gp.cov(0, 0));
        const double onepq = 1.0 + q;
        if (!(onepq > 0.0)) throw NumericalError("inverse capacity became non-positive");
        row.inv_capacity_mean = hp_.q0 * onepq;
        row.capacity_mean = 1.0 / row.inv_capacity_mean;
        row.capacity_var = qv / (hp_.q0 * hp_.q0 * std::pow(onepq, 4));
        const Eigen::Index ns = grid_size();
        row.r0_mean.resize(static_cast<std::size_t>(ns));
        row.r0_var.resize(static_cast<std::size_t>(ns));
        for (Eigen::Index k = 0; k < ns; ++k) {
            row.r0_mean[static_cast<std::size_t>(k)] = hp_.r0 * (1.0 + gp.mean(2 + 2 * k));
            row.r0_var[static_cast<std::size_t>(k)] = hp_.r0 * hp_.r0 * std::max(0.0, gp.cov(2 + 2 * k, 2 + 2 * k));
        }
        return row;
    }

    /// R0 mean surface at arbitrary SOC values for one current, from a GP state.
    std::vector<double> r0_profile(const GaussianState& gp, std::span<const double> socs, double current) const {
        std::vector<double> out;
        out.reserve(socs.size());
        const Eigen::Index ns = grid_size();
        const Eigen::VectorXd vals = Eigen::Map<const Eigen::VectorXd, 0, Eigen::InnerStride<2>>(gp.mean.data() + 2, ns);
        for (double z : socs) out.push_back(hp_.r0 * (1.0 + spatial_weights(z, current).dot(vals)));
        return out;
    }

    void check_psd(const Eigen::MatrixXd& p, FilterDiagnostics& diag) const {
        ++diag.psd_checks;
        const double tr = p.trace();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p, Eigen::EigenvaluesOnly);
        const double mn = es.eigenvalues().minCoeff();
        diag.min_eig_ratio = std::min(diag.min_eig_ratio, tr > 0 ? mn / tr : mn);
        if (mn < -1e-10 * tr) ++diag.psd_repairs;
    }

private:
    void clamp_soc(JointState& joint, FilterDiagnostics& diag) const {
        double& z = joint.mean(JointState::kSoc);
        if (!std::isfinite(z)) throw NumericalError("SOC became non-finite");
        if (z < options_.soc_clamp_low || z > options_.soc_clamp_high) {
            z = std::clamp(z, options_.soc_clamp_low, options_.soc_clamp_high);
            ++diag.soc_clamps;
        }
    }

    HyperParams hp_;
    CellConfig cell_;
    OcvCurve ocv_;
    EstimatorOptions options_;
    SpatialModel spatial_;
    GpDynamics dynamics_;
};

/// RTS smoothing over aging steps. Each snapshot is treated as if all of its
/// segment's data arrived at the snapshot's state age.
inline std::vector<GpSnapshot> smooth_snapshots(const std::vector<GpSnapshot>& snaps, const GpDynamics& dyn) {
    const std::size_t n = snaps.size();
    std::vector<GaussianState> filtered, predicted;
    std::vector<Eigen::MatrixXd> transition;
    for (std::size_t k = 0; k < n; ++k) {
        if (snaps[k].gp.cov.size() == 0) throw InvalidArgument("rts smoothing: missing stored covariance");
        filtered.push_back(snaps[k].gp);
        if (k == 0) {
            predicted.push_back(snaps[k].gp);
            transition.push_back(Eigen::MatrixXd::Identity(dyn.dim(), dyn.dim()));
            continue;
        }
        const double dt = std::max(0.0, snaps[k].state_age_days - snaps[k - 1].state_age_days);
        GaussianState pr = snaps[k - 1].gp;
        dyn.propagate(pr, dt);
        predicted.push_back(std::move(pr));
        transition.push_back(dyn.transition(dt));
    }
    const auto sm = rts_smooth(filtered, predicted, transition);
    std::vector<GpSnapshot> out(snaps);
    for (std::size_t k = 0; k < n; ++k) out[k].gp = sm[k];
    return out;
}

/// Smoothed health estimate of a completed co-estimation run.
inline HealthEstimate rts_smooth(const CoestimationResult& run, const CoEstimator& est) {
    HealthEstimate h;
    h.grid = est.spatial().grid();
    for (const auto& s : smooth_snapshots(run.snapshots, est.dynamics()))
        h.rows.push_back(est.health_row(s.gp, s.age_days, false));
    return h;
}

/// Pure propagation from `last` by each horizon (days); no measurement updates.
inline HealthEstimate predict_future(const GpSnapshot& last, std::span<const double> horizons, const CoEstimator& est) {
    HealthEstimate h;
    h.grid = est.spatial().grid();
    for (double dt : horizons) {
        if (!(dt >= 0.0)) throw InvalidArgument("predict_future: negative horizon");
        GaussianState s = last.gp;
        est.dynamics().propagate(s, dt);
        h.rows.push_back(est.health_row(s, last.age_days + dt, dt > 0.0));
    }
    return h;
}

inline CoestimationResult run_coestimation(std::span<const Segment> segments, const HyperParams& hp,
                                           const CellConfig& cell, const OcvCurve& ocv,
                                           const EstimatorOptions& options = {}) {
    return CoEstimator(hp, cell, ocv, options).run(segments);
}

// ---------------------------------------------------------------------------
// Linear GP-only filtering over aging steps (no ECM). Used for GP tracks that
// are observed directly, e.g. resistance or capacity references.

struct GpObservation {
    double age_days = 0.0;
    Eigen::VectorXd h;  // linear observation row over the GP state
    double value = 0.0;
    double noise_var = 0.0;
};

struct GpTrack {
    std::vector<GpSnapshot> filtered;  // one per distinct observation age
    std::vector<GpSnapshot> smoothed;
    double nlml = 0.0;
};

/// Kalman filter + RTS smoother of a linear GP observed at (possibly repeated) ages.
/// Observations must be sorted by age; the prior is taken at the first age.
inline GpTrack filter_gp_observations(const GpDynamics& dyn, std::span<const GpObservation> obs,
                                      CovarianceUpdate form = CovarianceUpdate::Joseph) {
    GpTrack track;
    if (obs.empty()) return track;
    GaussianState s = dyn.prior(obs.front().age_days);
    double age = obs.front().age_days;
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const auto& o = obs[k];
        if (o.age_days < age) throw DataError("filter_gp_observations: ages not sorted");
        if (o.age_days > age) {
            track.filtered.push_back({age, age, s});
            dyn.propagate(s, o.age_days - age);
            age = o.age_days;
        }
        track.nlml += scalar_update(s, o.h, o.value - o.h.dot(s.mean), o.noise_var, form).nlml;
    }
    track.filtered.push_back({age, age, s});
    track.smoothed = smooth_snapshots(track.filtered, dyn);
    return track;
}

}  // namespace gpsoh
