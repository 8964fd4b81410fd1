#pragma once

// Differential-voltage analytics on measured discharges and on learned
// resistance surfaces, plus peak tracking and LLI / LAM_n metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecm.hpp"
#include "error.hpp"

namespace gpsoh {

enum class CurveSource { Rpt, Estimated };

inline const char* to_string(CurveSource s) { return s == CurveSource::Rpt ? "rpt" : "estimated"; }

struct DvdqCurve {
    double age_days = 0.0;
    CurveSource source = CurveSource::Rpt;
    int half_window = 0;
    double reference_current = 0.0;
    std::vector<double> ah;     // discharged Ah, strictly increasing
    std::vector<double> value;  // V/Ah
};

/// Derivative dy/dx by local quadratic least squares over centred windows of
/// 2*half_window+1 samples. The first and last half_window points are dropped.
inline std::pair<std::vector<double>, std::vector<double>> local_quadratic_derivative(std::span<const double> x,
                                                                                     std::span<const double> y,
                                                                                     int half_window) {
    if (x.size() != y.size()) throw InvalidArgument("local derivative: x and y differ in length");
    if (half_window < 1) throw InvalidArgument("local derivative: half window must be >= 1");
    const auto h = static_cast<std::size_t>(half_window);
    if (x.size() < 2 * h + 1) throw DataError("local derivative: fewer points than the smoothing window");
    std::vector<double> xo, d;
    for (std::size_t c = h; c + h < x.size(); ++c) {
        Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
        Eigen::Vector3d aty = Eigen::Vector3d::Zero();
        // centred and scaled abscissa keeps the normal equations well conditioned
        const double scale = std::max(std::abs(x[c + h] - x[c - h]), 1e-300);
        for (std::size_t k = c - h; k <= c + h; ++k) {
            const double u = (x[k] - x[c]) / scale;
            const Eigen::Vector3d a(1.0, u, u * u);
            ata += a * a.transpose();
            aty += a * y[k];
        }
        const Eigen::Vector3d coef = ata.ldlt().solve(aty);
        xo.push_back(x[c]);
        d.push_back(coef(1) / scale);
    }
    return {xo, d};
}

/// dV/dQ of a discharge record against cumulative discharged Ah.
inline DvdqCurve dvdq_from_discharge(std::span<const double> voltage, std::span<const double> current,
                                     std::span<const double> time_s, int half_window = 12) {
    if (voltage.size() != current.size() || voltage.size() != time_s.size())
        throw InvalidArgument("dvdq: series lengths differ");
    std::vector<double> ah, v;
    double acc = 0.0;
    for (std::size_t k = 0; k < voltage.size(); ++k) {
        if (k > 0) acc += -current[k] * (time_s[k] - time_s[k - 1]) / kSecondsPerHour;
        if (!ah.empty() && !(acc > ah.back())) continue;  // rest or charge samples carry no new charge
        ah.push_back(acc);
        v.push_back(voltage[k]);
    }
    auto [x, d] = local_quadratic_derivative(ah, v, half_window);
    DvdqCurve c;
    c.source = CurveSource::Rpt;
    c.half_window = half_window;
    c.ah = std::move(x);
    c.value = std::move(d);
    return c;
}

/// d[I_ref R0]/dQ from a learned R0(z) profile at one age. `soc` ascending;
/// discharge Ah is (1 - z) Q. `reference_current` is signed (negative on discharge).
inline DvdqCurve dirdq_from_estimates(std::span<const double> soc, std::span<const double> r0, double capacity_ah,
                                      double reference_current, int half_window = 2) {
    if (soc.size() != r0.size()) throw InvalidArgument("dirdq: soc and r0 differ in length");
    if (!(capacity_ah > 0.0)) throw InvalidArgument("dirdq: capacity must be positive");
    std::vector<double> x, y;
    for (std::size_t k = soc.size(); k-- > 0;) {
        x.push_back((1.0 - soc[k]) * capacity_ah);
        y.push_back(reference_current * r0[k]);
    }
    for (std::size_t k = 1; k < x.size(); ++k)
        if (!(x[k] > x[k - 1])) throw InvalidArgument("dirdq: SOC values must be strictly ascending");
    auto [xo, d] = local_quadratic_derivative(x, y, half_window);
    DvdqCurve c;
    c.source = CurveSource::Estimated;
    c.half_window = half_window;
    c.reference_current = reference_current;
    c.ah = std::move(xo);
    c.value = std::move(d);
    return c;
}

/// Pearson coefficient per column of two (ages x socs) tables; absent where
/// either column has zero variance.
inline std::vector<std::optional<double>> correlate_r0_docv(const Eigen::MatrixXd& r0, const Eigen::MatrixXd& docv) {
    if (r0.rows() != docv.rows() || r0.cols() != docv.cols())
        throw InvalidArgument("correlate: tables must have the same shape");
    if (r0.rows() < 3) throw InvalidArgument("correlate: need at least three ages");
    std::vector<std::optional<double>> out;
    for (Eigen::Index c = 0; c < r0.cols(); ++c) {
        const Eigen::VectorXd a = r0.col(c).array() - r0.col(c).mean();
        const Eigen::VectorXd b = docv.col(c).array() - docv.col(c).mean();
        const double na = a.norm(), nb = b.norm();
        const double tiny = 1e-14;
        if (na <= tiny * std::max(1.0, r0.col(c).cwiseAbs().maxCoeff()) ||
            nb <= tiny * std::max(1.0, docv.col(c).cwiseAbs().maxCoeff())) {
            out.emplace_back(std::nullopt);
            continue;
        }
        out.emplace_back(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
    }
    return out;
}

struct Peak {
    int id = -1;
    double position = 0.0;    // Ah
    double height = 0.0;      // curve value at the peak (original sign)
    double prominence = 0.0;  // in polarity-adjusted units
};

struct PeakTrack {
    std::vector<double> ages;
    std::vector<std::vector<Peak>> peaks;  // per age

    std::optional<Peak> find(std::size_t age_index, int id) const {
        for (const auto& p : peaks.at(age_index))
            if (p.id == id) return p;
        return std::nullopt;
    }
};

struct PeakOptions {
    double prominence_fraction = 0.05;  // of the curve range
    double polarity = 1.0;              // -1 tracks minima (discharge dV/dQ is negative)
    std::optional<double> prominence_threshold;  // absolute, overrides the fraction
};

/// Local maxima of polarity * value with topographic prominence above threshold,
/// refined by a three-point parabola.
inline std::vector<Peak> find_peaks(const DvdqCurve& c, const PeakOptions& opt) {
    const std::size_t n = c.value.size();
    std::vector<Peak> out;
    if (n < 3) return out;
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = opt.polarity * c.value[k];
    const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
    const double threshold = opt.prominence_threshold ? *opt.prominence_threshold : opt.prominence_fraction * (*mx - *mn);
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (!(y[k] > y[k - 1] && y[k] >= y[k + 1])) continue;
        double left_min = y[k], right_min = y[k];
        for (std::size_t j = k; j-- > 0;) {
            if (y[j] > y[k]) break;
            left_min = std::min(left_min, y[j]);
        }
        for (std::size_t j = k + 1; j < n; ++j) {
            if (y[j] > y[k]) break;
            right_min = std::min(right_min, y[j]);
        }
        const double prom = y[k] - std::max(left_min, right_min);
        if (!(prom >= threshold) || prom <= 0.0) continue;
        // vertex of the parabola through the three points
        const double x0 = c.ah[k - 1], x1 = c.ah[k], x2 = c.ah[k + 1];
        const double y0 = y[k - 1], y1 = y[k], y2 = y[k + 1];
        const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
        const double a = (d12 - d01) / (x2 - x0);
        double pos = x1;
        if (a < 0.0) pos = std::clamp(0.5 * (x0 + x1) - d01 / (2.0 * a), x0, x2);
        out.push_back({-1, pos, c.value[k], prom});
    }
    return out;
}

/// Peaks of each curve, linked across ages by nearest position to each track's
/// latest position.
inline PeakTrack track_peaks(std::span<const DvdqCurve> curves, const PeakOptions& opt = {}) {
    PeakTrack track;
    std::vector<double> last_pos;  // per id
    for (const auto& c : curves) {
        auto peaks = find_peaks(c, opt);
        struct Cand {
            double dist;
            std::size_t peak;
            int id;
        };
        std::vector<Cand> cands;
        for (std::size_t p = 0; p < peaks.size(); ++p)
            for (std::size_t id = 0; id < last_pos.size(); ++id)
                cands.push_back({std::abs(peaks[p].position - last_pos[id]), p, static_cast<int>(id)});
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.dist != b.dist ? a.dist < b.dist : (a.id != b.id ? a.id < b.id : a.peak < b.peak);
        });
        std::vector<bool> id_used(last_pos.size(), false);
        for (const auto& cd : cands) {
            if (peaks[cd.peak].id >= 0 || id_used[static_cast<std::size_t>(cd.id)]) continue;
            peaks[cd.peak].id = cd.id;
            id_used[static_cast<std::size_t>(cd.id)] = true;
        }
        for (auto& p : peaks) {
            if (p.id < 0) {
                p.id = static_cast<int>(last_pos.size());
                last_pos.push_back(p.position);
            } else {
                last_pos[static_cast<std::size_t>(p.id)] = p.position;
            }
        }
        track.ages.push_back(c.age_days);
        track.peaks.push_back(std::move(peaks));
    }
    return track;
}

struct ModeSelection {
    int anchor_id = 0;
    int pair_first = 0;
    int pair_second = 1;
};

struct DegradationModes {
    double age_days = 0.0;
    std::optional<double> lli_pct;
    std::optional<double> lam_n_pct;
    double lli_uncertainty_pct = 0.0;
    double lam_n_uncertainty_pct = 0.0;
};

/// LLI: shift of the anchor peak toward lower discharged Ah relative to the
/// first age, in % of first-age capacity. LAM_n: relative shrinkage of the
/// distance between the designated peak pair. `position_uncertainty` (Ah) per
/// age is typically half the Ah spacing of the curve.
inline std::vector<DegradationModes> degradation_modes(const PeakTrack& track, std::span<const double> capacities,
                                                       std::span<const double> position_uncertainty,
                                                       const ModeSelection& sel = {}) {
    const std::size_t n = track.ages.size();
    if (capacities.size() != n || position_uncertainty.size() != n)
        throw InvalidArgument("degradation_modes: per-age inputs differ in length");
    std::vector<DegradationModes> out;
    if (n == 0) return out;
    const double q_bol = capacities[0];
    const auto anchor0 = track.find(0, sel.anchor_id);
    const auto a0 = track.find(0, sel.pair_first), b0 = track.find(0, sel.pair_second);
    const double u0 = position_uncertainty[0];
    for (std::size_t k = 0; k < n; ++k) {
        DegradationModes m;
        m.age_days = track.ages[k];
        const double uk = position_uncertainty[k];
        if (const auto ak = track.find(k, sel.anchor_id); ak && anchor0) {
            m.lli_pct = 100.0 * (anchor0->position - ak->position) / q_bol;
            m.lli_uncertainty_pct = 100.0 * (u0 + uk) / q_bol;
        }
        const auto ak = track.find(k, sel.pair_first), bk = track.find(k, sel.pair_second);
        if (a0 && b0 && ak && bk) {
            const double d0 = std::abs(a0->position - b0->position);
            const double dk = std::abs(ak->position - bk->position);
            if (d0 > 0.0) {
                m.lam_n_pct = 100.0 * (d0 - dk) / d0;
                m.lam_n_uncertainty_pct = 100.0 * 2.0 * (u0 + uk) / d0;
            }
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace gpsoh
