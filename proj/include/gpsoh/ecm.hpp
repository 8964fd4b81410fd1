#pragma once

// Zeroth-order equivalent circuit: OCV source in series with R0.
// Sign convention: discharge current is negative.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace gpsoh {

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kSecondsPerDay = 86400.0;

/// Monotone piecewise-cubic Hermite (Fritsch-Carlson) OCV-SOC curve.
/// Outside the knot range the curve is extended linearly with the end slope.
class OcvCurve {
public:
    OcvCurve() = default;

    OcvCurve(std::vector<double> soc, std::vector<double> volts) : soc_(std::move(soc)), volts_(std::move(volts)) {
        if (soc_.size() != volts_.size()) throw InvalidArgument("OcvCurve: soc and voltage lengths differ");
        if (soc_.size() < 2) throw InvalidArgument("OcvCurve: need at least two knots");
        for (std::size_t k = 0; k < soc_.size(); ++k)
            if (!std::isfinite(soc_[k]) || !std::isfinite(volts_[k])) throw InvalidArgument("OcvCurve: non-finite knot");
        for (std::size_t k = 1; k < soc_.size(); ++k) {
            if (!(soc_[k] > soc_[k - 1])) throw InvalidArgument("OcvCurve: SOC knots must be strictly ascending");
            if (!(volts_[k] > volts_[k - 1])) throw InvalidArgument("OcvCurve: voltage must be strictly increasing in SOC");
        }
        compute_slopes();
    }

    /// Reads a two-column (soc, volts) text file; '#' lines and a non-numeric header are skipped.
    static OcvCurve load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open OCV file: " + path);
        std::vector<double> soc, volts;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            double z = 0.0, v = 0.0;
            if (!(ss >> z >> v)) {
                if (soc.empty()) continue;  // header row
                throw DataError("malformed OCV row in " + path + ": " + line);
            }
            soc.push_back(z);
            volts.push_back(v);
        }
        if (soc.size() < 10) throw DataError("OCV file needs at least 10 rows: " + path);
        try {
            return OcvCurve(std::move(soc), std::move(volts));
        } catch (const InvalidArgument& e) {
            throw DataError(std::string(e.what()) + " (" + path + ")");
        }
    }

    void save(std::ostream& out) const {
        out << "soc,volts\n";
        out.precision(17);
        for (std::size_t k = 0; k < soc_.size(); ++k) out << soc_[k] << ',' << volts_[k] << '\n';
    }

    bool in_range(double z) const { return z >= soc_.front() && z <= soc_.back(); }

    double operator()(double z) const { return value(z); }

    double value(double z) const {
        if (z <= soc_.front()) return volts_.front() + slope_.front() * (z - soc_.front());
        if (z >= soc_.back()) return volts_.back() + slope_.back() * (z - soc_.back());
        const std::size_t k = segment(z);
        const double h = soc_[k + 1] - soc_[k];
        const double t = (z - soc_[k]) / h;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * volts_[k] + (t3 - 2 * t2 + t) * h * slope_[k] + (-2 * t3 + 3 * t2) * volts_[k + 1] +
               (t3 - t2) * h * slope_[k + 1];
    }

    double derivative(double z) const {
        if (z <= soc_.front()) return slope_.front();
        if (z >= soc_.back()) return slope_.back();
        const std::size_t k = segment(z);
        const double h = soc_[k + 1] - soc_[k];
        const double t = (z - soc_[k]) / h;
        const double t2 = t * t;
        return ((6 * t2 - 6 * t) * volts_[k] + (-6 * t2 + 6 * t) * volts_[k + 1]) / h + (3 * t2 - 4 * t + 1) * slope_[k] +
               (3 * t2 - 2 * t) * slope_[k + 1];
    }

    /// SOC whose OCV equals `volts`. Exact to ~1e-12 inside the knot range.
    double invert(double volts) const {
        if (volts <= volts_.front())
            return slope_.front() > 0 ? soc_.front() + (volts - volts_.front()) / slope_.front() : soc_.front();
        if (volts >= volts_.back())
            return slope_.back() > 0 ? soc_.back() + (volts - volts_.back()) / slope_.back() : soc_.back();
        const auto it = std::upper_bound(volts_.begin(), volts_.end(), volts);
        const std::size_t k = static_cast<std::size_t>(it - volts_.begin()) - 1;
        double lo = soc_[k], hi = soc_[k + 1];
        for (int iter = 0; iter < 200 && hi - lo > 1e-15; ++iter) {
            const double mid = 0.5 * (lo + hi);
            (value(mid) < volts ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    const std::vector<double>& soc_knots() const { return soc_; }
    const std::vector<double>& voltage_knots() const { return volts_; }

private:
    std::size_t segment(double z) const {
        const auto it = std::upper_bound(soc_.begin(), soc_.end(), z);
        return std::min(static_cast<std::size_t>(it - soc_.begin()) - 1, soc_.size() - 2);
    }

    void compute_slopes() {
        const std::size_t n = soc_.size();
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            h[k] = soc_[k + 1] - soc_[k];
            delta[k] = (volts_[k + 1] - volts_[k]) / h[k];
        }
        slope_.assign(n, 0.0);
        if (n == 2) {
            slope_[0] = slope_[1] = delta[0];
            return;
        }
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (delta[k - 1] * delta[k] <= 0.0) continue;
            const double w1 = 2 * h[k] + h[k - 1];
            const double w2 = h[k] + 2 * h[k - 1];
            slope_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
        auto end_slope = [](double h0, double h1, double d0, double d1) {
            double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if (d * d0 <= 0.0) return 0.0;
            if (d0 * d1 <= 0.0 && std::abs(d) > 3 * std::abs(d0)) return 3 * d0;
            return d;
        };
        slope_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        slope_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    std::vector<double> soc_;
    std::vector<double> volts_;
    std::vector<double> slope_;
};

/// Cell-level priors and discretization of the operating grid.
struct CellConfig {
    double q0 = 1.0 / 0.28;    // prior inverse capacity, 1/Ah
    double r0 = 0.13;          // prior resistance, Ohm
    double v_min = 3.0;
    double v_max = 4.2;
    int n_soc = 25;
    int n_current = 1;
    double current_min = 0.0;  // |I| range covered by the grid, A
    double current_max = 1.0;

    void validate() const {
        if (!(q0 > 0.0) || !(r0 > 0.0)) throw ConfigError("cell: q0 and r0 must be positive");
        if (n_soc < 2) throw ConfigError("cell: n_soc must be >= 2");
        if (n_current < 1) throw ConfigError("cell: n_current must be >= 1");
        if (!(v_max > v_min)) throw ConfigError("cell: v_max must exceed v_min");
        if (n_current > 1 && !(std::abs(current_max) > std::abs(current_min)))
            throw ConfigError("cell: current range must be non-degenerate when n_current > 1");
    }
};

inline double terminal_voltage(double soc, double current, double r0, const OcvCurve& ocv) {
    return ocv(soc) + r0 * current;
}

/// One Coulomb-counting step. `dt_s` in seconds, `inv_capacity` in 1/Ah.
inline double coulomb_step(double soc, double current, double dt_s, double inv_capacity) {
    if (!(dt_s > 0.0)) throw InvalidArgument("coulomb_step: time step must be positive");
    if (!(inv_capacity > 0.0)) throw InvalidArgument("coulomb_step: inverse capacity must be positive");
    return soc + inv_capacity * current * dt_s / kSecondsPerHour;
}

}  // namespace gpsoh
