#pragma once

// Synthetic cells used by the benchmarks and the `synth` command. Magnitudes
// follow a small 502030-format NMC/graphite cell: ~0.28 Ah, ~0.13 Ohm, 3.0-4.2 V.

#include <cmath>
#include <string>
#include <vector>

#include "datasets.hpp"
#include "ecm.hpp"
#include "error.hpp"

namespace gpsoh::scenarios {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Smooth NMC-like OCV on [0, 1] rescaled to [3.0, 4.2] V, with two
/// phase-transition shoulders (dV/dQ features) near z = 0.22 and z = 0.58.
inline OcvCurve reference_ocv(std::size_t knots = 201, bool shoulders = true) {
    const double h = shoulders ? 1.0 : 0.0;
    auto f = [h](double z) {
        return 3.35 + 0.75 * z + 0.1 * z * z - 0.35 * std::exp(-z / 0.05) + h * 0.06 * logistic((z - 0.22) / 0.02) +
               h * 0.05 * logistic((z - 0.58) / 0.03);
    };
    const double f0 = f(0.0), f1 = f(1.0);
    std::vector<double> soc, v;
    for (std::size_t k = 0; k < knots; ++k) {
        const double z = static_cast<double>(k) / static_cast<double>(knots - 1);
        soc.push_back(z);
        v.push_back(3.0 + 1.2 * (f(z) - f0) / (f1 - f0));
    }
    return OcvCurve(soc, v);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(k) / (n - 1));
    return out;
}

/// Repeating drive-like pulse train, mean about 0.5C discharge.
inline DriveProfile pulsed_drive() {
    DriveProfile d;
    d.currents = {-0.28, -0.07, -0.14, -0.02, -0.21};
    d.durations_s = {60.0, 60.0, 60.0, 30.0, 60.0};
    return d;
}

struct Schedule {
    double first_age = 1.0;
    double last_train_age = 100.0;
    std::size_t n_train = 10;
    std::vector<double> test_offsets{10.0, 20.0, 30.0};
};

inline void apply_schedule(SynthSpec& s, const Schedule& sch) {
    s.ages = linspace(sch.first_age, sch.last_train_age, sch.n_train);
    for (double d : sch.test_offsets) s.ages.push_back(sch.last_train_age + d);
    s.n_train = sch.n_train;
}

/// Linear fade 0.28 -> 0.25 Ah over 100 days, constant 0.13 Ohm, pulsed discharge.
inline SynthSpec linear_fade(const Schedule& sch = {}) {
    SynthSpec s;
    s.cell_id = "synth-linear-fade";
    s.ocv = reference_ocv();
    s.capacity = [](double age) { return 0.28 - 0.0003 * age; };
    s.resistance = [](double, double, double) { return 0.13; };
    s.noise_std = 0.005;
    s.drive = pulsed_drive();
    s.sample_period_s = 10.0;
    apply_schedule(s, sch);
    return s;
}

/// Linear fade plus an OCV shape drift that grows linearly with age and varies with SOC.
inline SynthSpec ocv_drift(const Schedule& sch = {}, double amplitude_v = 0.03) {
    SynthSpec s = linear_fade(sch);
    s.cell_id = "synth-ocv-drift";
    // constant current so that a voltage offset is indistinguishable from an R0 change
    s.drive.currents = {-0.14};
    s.drive.durations_s = {3600.0};
    s.ocv_shift = [amplitude_v](double z, double age) {
        constexpr double two_pi = 6.283185307179586;
        return -amplitude_v * (age / 100.0) * (0.6 + 0.4 * std::cos(two_pi * z));
    };
    return s;
}

/// Two fixed-depth OCV dips unknown to the BoL OCV, centred at SOC
/// c_i + rate * (age - start_age). Under constant current each shows up as a
/// d[I R0]/dQ peak at (1 - c_i) Q. The cell enters the test at `start_age`
/// days after manufacture, so the schedule starts there.
struct PeakShift {
    double c_first = 0.7;
    double c_second = 0.3;
    double rate_per_day = -0.001;
    double depth_v = 0.0025;
    double width = 0.05;
    double start_age = 30.0;
    bool fade = true;

    double centre(int which, double age) const {
        return (which == 0 ? c_first : c_second) + rate_per_day * (age - start_age);
    }
    double shift(double z, double age) const {
        return -depth_v * (logistic((z - centre(0, age)) / width) + logistic((z - centre(1, age)) / width));
    }
    /// Discharged Ah at which peak `which` sits for capacity `q`.
    double position(int which, double age, double q) const { return (1.0 - centre(which, age)) * q; }
    Schedule schedule() const {
        Schedule s;
        s.first_age = start_age;
        s.last_train_age = start_age + 99.0;
        return s;
    }
};

inline SynthSpec peak_shift(const PeakShift& p = {}) {
    SynthSpec s = linear_fade(p.schedule());
    s.cell_id = p.rate_per_day == 0.0 && !p.fade ? "synth-peak-control" : "synth-peak-shift";
    s.ocv = reference_ocv(201, false);  // the dips are the only dV/dQ features
    s.drive.currents = {-0.14};
    s.drive.durations_s = {3600.0};
    const double t0 = p.start_age;
    s.capacity = [p, t0](double age) { return p.fade ? 0.28 - 0.0003 * (age - t0) : 0.28; };
    s.ocv_shift = [p](double z, double age) { return p.shift(z, age); };
    return s;
}

inline PeakShift peak_control() {
    PeakShift p;
    p.rate_per_day = 0.0;
    p.fade = false;
    return p;
}

inline SynthSpec by_name(const std::string& name) {
    if (name == "linear_fade") return linear_fade();
    if (name == "ocv_drift") return ocv_drift();
    if (name == "peak_shift") return peak_shift();
    if (name == "peak_control") return peak_shift(peak_control());
    throw ConfigError("unknown synthetic scenario '" + name + "'");
}

}  // namespace gpsoh::scenarios
