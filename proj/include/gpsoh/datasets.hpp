#pragma once

// Cycling-data ingestion, discharge-segment extraction, pseudo-OCV calibration
// and a synthetic ground-truth cell generator.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ecm.hpp"
#include "error.hpp"
#include "segment.hpp"
#include "table_io.hpp"

namespace gpsoh {

struct RawRecord {
    double time_s = 0.0;
    double current = 0.0;  // A, negative on discharge
    double voltage = 0.0;  // V
};

/// Column mapping and unit conversion of a cycling CSV.
struct CsvSchema {
    std::string time_column = "time_s";
    std::string current_column = "current_a";
    std::string voltage_column = "voltage_v";
    double time_scale = 1.0;     // to seconds
    double current_scale = 1.0;  // to Amperes
    double voltage_scale = 1.0;  // to Volts
    bool discharge_positive = false;  // flip the sign at ingestion when true
    char delimiter = ',';
    double max_malformed_fraction = 0.01;
};

struct LoadReport {
    std::size_t rows = 0;
    std::size_t malformed = 0;
};

inline std::vector<RawRecord> load_cycling_csv(std::istream& in, const CsvSchema& schema, LoadReport* report = nullptr,
                                               const std::string& name = "<stream>") {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        header = detail::split(line, schema.delimiter);
        break;
    }
    if (header.empty()) throw DataError(name + ": empty file");
    auto find = [&](const std::string& col) {
        const auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) throw ColumnMappingError(name + ": missing column '" + col + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ct = find(schema.time_column), ci = find(schema.current_column), cv = find(schema.voltage_column);
    const std::size_t need = std::max({ct, ci, cv}) + 1;
    const double sign = schema.discharge_positive ? -1.0 : 1.0;

    std::vector<RawRecord> out;
    LoadReport rep;
    double last_t = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        ++rep.rows;
        const auto f = detail::split(line, schema.delimiter);
        RawRecord r;
        if (f.size() < need || !detail::parse_double(f[ct], r.time_s) || !detail::parse_double(f[ci], r.current) ||
            !detail::parse_double(f[cv], r.voltage)) {
            ++rep.malformed;
            continue;
        }
        r.time_s *= schema.time_scale;
        r.current *= schema.current_scale * sign;
        r.voltage *= schema.voltage_scale;
        if (!std::isfinite(r.time_s) || !std::isfinite(r.current) || !std::isfinite(r.voltage) || !(r.time_s > last_t)) {
            ++rep.malformed;
            continue;
        }
        last_t = r.time_s;
        out.push_back(r);
    }
    if (rep.rows > 0 && static_cast<double>(rep.malformed) > schema.max_malformed_fraction * static_cast<double>(rep.rows))
        throw DataError(name + ": " + std::to_string(rep.malformed) + " of " + std::to_string(rep.rows) +
                        " rows malformed (limit " + detail::format_double(100 * schema.max_malformed_fraction) + "%)");
    if (report) *report = rep;
    return out;
}

inline std::vector<RawRecord> load_cycling_csv(const std::string& path, const CsvSchema& schema,
                                               LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return load_cycling_csv(in, schema, report, path);
}

struct ExtractionCriteria {
    double nominal_capacity_ah = 1.0;
    double threshold_c_fraction = 0.01;  // discharge when I < -C * fraction
    double min_duration_s = 60.0;
    std::size_t n_train = 10;
    std::string cell_id = "cell";
};

namespace detail {

struct Run {
    std::size_t first = 0;  // index of the sample preceding the discharge, if any
    std::size_t last = 0;   // inclusive
};

inline double median_dt(std::span<const double> t) {
    if (t.size() < 2) return 0.0;
    std::vector<double> d;
    for (std::size_t k = 1; k < t.size(); ++k) d.push_back(t[k] - t[k - 1]);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return d[d.size() / 2];
}

}  // namespace detail

/// Contiguous discharge runs, each with its preceding (rest) sample when present.
inline std::vector<detail::Run> find_discharge_runs(std::span<const RawRecord> stream, const ExtractionCriteria& c) {
    const double threshold = -c.nominal_capacity_ah * c.threshold_c_fraction;
    std::vector<detail::Run> runs;
    std::size_t k = 0;
    while (k < stream.size()) {
        if (!(stream[k].current < threshold)) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e + 1 < stream.size() && stream[e + 1].current < threshold) ++e;
        if (stream[e].time_s - stream[k].time_s >= c.min_duration_s) runs.push_back({k > 0 ? k - 1 : k, e});
        k = e + 1;
    }
    return runs;
}

/// Picks `n_segments` discharge runs spread uniformly in age over the record.
inline std::vector<Segment> extract_discharge_segments(std::span<const RawRecord> stream, std::size_t n_segments,
                                                       const ExtractionCriteria& c) {
    if (stream.empty()) throw DataError("extract: empty record stream");
    const auto runs = find_discharge_runs(stream, c);
    if (runs.size() < n_segments)
        throw DataError("extract: found " + std::to_string(runs.size()) + " discharge runs, " +
                        std::to_string(n_segments) + " requested");
    const double t0 = stream.front().time_s;
    auto age = [&](const detail::Run& r) { return (stream[r.first].time_s - t0) / kSecondsPerDay; };

    std::vector<std::size_t> chosen;
    std::vector<bool> used(runs.size(), false);
    const double a0 = age(runs.front()), a1 = age(runs.back());
    for (std::size_t j = 0; j < n_segments; ++j) {
        const double target = n_segments == 1 ? a0 : a0 + (a1 - a0) * static_cast<double>(j) / (n_segments - 1);
        std::size_t best = runs.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < runs.size(); ++r) {
            if (used[r]) continue;
            const double d = std::abs(age(runs[r]) - target);
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        used[best] = true;
        chosen.push_back(best);
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<Segment> out;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
        const auto& r = runs[chosen[j]];
        Segment s;
        s.cell_id = c.cell_id;
        s.age_days = age(r);
        s.role = j < c.n_train ? SegmentRole::Train : SegmentRole::Test;
        for (std::size_t k = r.first; k <= r.last; ++k) {
            s.time_s.push_back(stream[k].time_s - stream[r.first].time_s);
            s.current.push_back(stream[k].current);
            s.voltage.push_back(stream[k].voltage);
        }
        s.sample_period_s = detail::median_dt(s.time_s);
        out.push_back(std::move(s));
    }
    return out;
}

struct OcvCalibration {
    OcvCurve curve;
    double capacity_ah = 0.0;  // discharged charge of the calibration run
    double max_repair_v = 0.0;  // largest isotonic adjustment applied
};

/// Pseudo-OCV from a low-rate full discharge: SOC = 1 - Ah/Ah_total, voltages
/// averaged in `n_bins` SOC bins centred on knots j/(n_bins-1), then made
/// strictly increasing.
inline OcvCalibration calibrate_ocv(std::span<const RawRecord> rpt, std::size_t n_bins = 100,
                                    double repair_tolerance_v = 0.01) {
    if (n_bins < 10) throw InvalidArgument("calibrate_ocv: need at least 10 bins");
    std::vector<double> ah, v;
    double acc = 0.0;
    bool started = false;
    for (std::size_t k = 0; k < rpt.size(); ++k) {
        if (!(rpt[k].current < 0.0)) {
            if (started) break;  // end of the discharge branch
            continue;
        }
        if (started) acc += -rpt[k].current * (rpt[k].time_s - rpt[k - 1].time_s) / kSecondsPerHour;
        started = true;
        ah.push_back(acc);
        v.push_back(rpt[k].voltage);
    }
    if (ah.size() < n_bins || !(acc > 0.0)) throw DataError("calibrate_ocv: discharge branch too short");

    const double m = static_cast<double>(n_bins - 1);
    std::vector<double> sum(n_bins, 0.0), cnt(n_bins, 0.0);
    for (std::size_t k = 0; k < ah.size(); ++k) {
        const double z = 1.0 - ah[k] / acc;
        const auto b = static_cast<std::size_t>(std::clamp(std::lround(z * m), 0L, static_cast<long>(n_bins - 1)));
        sum[b] += v[k];
        cnt[b] += 1.0;
    }
    std::vector<double> soc(n_bins), volts(n_bins, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < n_bins; ++b) {
        soc[b] = static_cast<double>(b) / m;
        if (cnt[b] > 0) volts[b] = sum[b] / cnt[b];
    }
    // fill empty bins linearly from populated neighbours
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (!std::isnan(volts[b])) continue;
        std::size_t lo = b, hi = b;
        while (lo > 0 && std::isnan(volts[lo])) --lo;
        while (hi + 1 < n_bins && std::isnan(volts[hi])) ++hi;
        if (std::isnan(volts[lo])) volts[b] = volts[hi];
        else if (std::isnan(volts[hi])) volts[b] = volts[lo];
        else volts[b] = volts[lo] + (volts[hi] - volts[lo]) * (soc[b] - soc[lo]) / (soc[hi] - soc[lo]);
    }
    if (std::any_of(volts.begin(), volts.end(), [](double x) { return std::isnan(x); }))
        throw DataError("calibrate_ocv: no populated bins");

    // pool-adjacent-violators for a non-decreasing fit
    std::vector<double> level, weight;
    std::vector<std::size_t> len;
    for (std::size_t b = 0; b < n_bins; ++b) {
        level.push_back(volts[b]);
        weight.push_back(1.0);
        len.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const std::size_t n = level.size();
            const double w = weight[n - 2] + weight[n - 1];
            level[n - 2] = (level[n - 2] * weight[n - 2] + level[n - 1] * weight[n - 1]) / w;
            weight[n - 2] = w;
            len[n - 2] += len[n - 1];
            level.pop_back();
            weight.pop_back();
            len.pop_back();
        }
    }
    std::vector<double> iso;
    for (std::size_t g = 0; g < level.size(); ++g) iso.insert(iso.end(), len[g], level[g]);
    OcvCalibration out;
    for (std::size_t b = 0; b < n_bins; ++b) out.max_repair_v = std::max(out.max_repair_v, std::abs(iso[b] - volts[b]));
    if (out.max_repair_v > repair_tolerance_v)
        throw DataError("calibrate_ocv: curve non-monotone beyond repair tolerance (" +
                        detail::format_double(out.max_repair_v) + " V)");
    // break ties left by pooling
    constexpr double kTieStep = 1e-6;
    for (std::size_t b = 1; b < n_bins; ++b)
        if (!(iso[b] > iso[b - 1])) iso[b] = iso[b - 1] + kTieStep;
    out.curve = OcvCurve(soc, iso);
    out.capacity_ah = acc;
    return out;
}

// ---------------------------------------------------------------------------
// Segment files

inline Table segment_table(const Segment& s) {
    Table t;
    t.kind = "segment";
    t.set("cell_id", s.cell_id);
    t.set("age_days", detail::format_double(s.age_days));
    t.set("sample_period_s", detail::format_double(s.sample_period_s));
    t.set("role", to_string(s.role));
    t.columns = {"time_s", "current_a", "voltage_v"};
    for (std::size_t k = 0; k < s.size(); ++k)
        t.rows.push_back({detail::format_double(s.time_s[k]), detail::format_double(s.current[k]),
                          detail::format_double(s.voltage[k])});
    return t;
}

inline Segment segment_from_table(const Table& t) {
    if (t.kind != "segment") throw DataError("not a segment file (kind '" + t.kind + "')");
    Segment s;
    s.cell_id = t.get("cell_id");
    if (!detail::parse_double(t.get("age_days"), s.age_days)) throw DataError("segment file: bad age_days");
    detail::parse_double(t.get("sample_period_s"), s.sample_period_s);
    s.role = t.get("role") == "test" ? SegmentRole::Test : SegmentRole::Train;
    const auto ct = t.column("time_s"), ci = t.column("current_a"), cv = t.column("voltage_v");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        s.time_s.push_back(t.number(r, ct));
        s.current.push_back(t.number(r, ci));
        s.voltage.push_back(t.number(r, cv));
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Piecewise-constant current schedule, repeated until the voltage cutoff.
struct DriveProfile {
    std::vector<double> currents{-0.14};  // A
    std::vector<double> durations_s{3600.0};

    double at(double t) const {
        const double period = std::accumulate(durations_s.begin(), durations_s.end(), 0.0);
        double tau = period > 0 ? std::fmod(t, period) : 0.0;
        for (std::size_t k = 0; k < currents.size(); ++k) {
            if (tau < durations_s[k]) return currents[k];
            tau -= durations_s[k];
        }
        return currents.back();
    }
};

struct SynthSpec {
    std::string cell_id = "synth";
    OcvCurve ocv;                                          // BoL OCV
    std::function<double(double age)> capacity;            // Ah
    std::function<double(double soc, double abs_current, double age)> resistance;  // pure R0, Ohm
    std::function<double(double soc, double age)> ocv_shift;  // Volts; may be empty
    double noise_std = 0.005;
    DriveProfile drive;
    double sample_period_s = 10.0;
    std::vector<double> ages;  // segment schedule, days
    std::size_t n_train = 10;
    double soc_start = 1.0;
    double soc_start_std = 0.0;
    double v_min = 3.0;
    double max_duration_s = 5.0 * 3600.0;
};

struct SynthTruth {
    double age_days = 0.0;
    double capacity_ah = 0.0;
    double soc_start = 1.0;
    bool truncated = false;
};

struct SynthOutput {
    std::vector<Segment> segments;
    std::vector<SynthTruth> truth;
};

/// Noise-free terminal voltage of the generator's cell.
inline double synth_voltage(const SynthSpec& spec, double soc, double current, double age) {
    double v = spec.ocv(soc) + spec.resistance(soc, std::abs(current), age) * current;
    if (spec.ocv_shift) v += spec.ocv_shift(soc, age);
    return v;
}

/// Each segment: one rest sample at soc_start, then drive samples until the
/// noise-free voltage would cross v_min (or z reaches 0 / max duration).
inline SynthOutput synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (!spec.capacity || !spec.resistance) throw InvalidArgument("synth: capacity and resistance functions required");
    if (!(spec.sample_period_s > 0.0)) throw InvalidArgument("synth: sample period must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SynthOutput out;
    for (std::size_t j = 0; j < spec.ages.size(); ++j) {
        const double age = spec.ages[j];
        const double q = spec.capacity(age);
        if (!(q > 0.0)) throw InvalidArgument("synth: capacity must be positive");
        Segment s;
        s.cell_id = spec.cell_id;
        s.age_days = age;
        s.sample_period_s = spec.sample_period_s;
        s.role = j < spec.n_train ? SegmentRole::Train : SegmentRole::Test;
        SynthTruth tr{age, q, spec.soc_start, false};
        double z = spec.soc_start;
        if (spec.soc_start_std > 0.0) z += spec.soc_start_std * gauss(rng);
        tr.soc_start = z;
        s.time_s.push_back(0.0);
        s.current.push_back(0.0);
        s.voltage.push_back(synth_voltage(spec, z, 0.0, age) + spec.noise_std * gauss(rng));
        for (double t = spec.sample_period_s; t <= spec.max_duration_s; t += spec.sample_period_s) {
            const double i = spec.drive.at(t - spec.sample_period_s);
            const double zn = z + i * spec.sample_period_s / (kSecondsPerHour * q);
            const double v = synth_voltage(spec, zn, i, age);
            if (v < spec.v_min || zn <= 0.0) {
                tr.truncated = true;
                break;
            }
            z = zn;
            s.time_s.push_back(t);
            s.current.push_back(i);
            s.voltage.push_back(v + spec.noise_std * gauss(rng));
        }
        out.segments.push_back(std::move(s));
        out.truth.push_back(tr);
    }
    return out;
}

/// Raw cycling stream of a synthetic cell: each segment followed by a charge
/// back to full and a rest, with segments placed at their ages.
inline std::vector<RawRecord> synth_cycling_stream(const SynthOutput& synth, double charge_current = 0.5) {
    std::vector<RawRecord> out;
    for (const auto& s : synth.segments) {
        const double t0 = s.age_days * kSecondsPerDay;
        for (std::size_t k = 0; k < s.size(); ++k) out.push_back({t0 + s.time_s[k], s.current[k], s.voltage[k]});
        const double tend = t0 + s.time_s.back();
        const double dt = s.sample_period_s > 0 ? s.sample_period_s : 10.0;
        for (int k = 1; k <= 20; ++k) out.push_back({tend + k * dt, charge_current, s.voltage.front()});
        out.push_back({tend + 21 * dt, 0.0, s.voltage.front()});
    }
    return out;
}

/// Low-rate full discharge of the BoL cell, for OCV calibration.
inline std::vector<RawRecord> synth_rpt_discharge(const SynthSpec& spec, double current, double sample_period_s,
                                                  std::uint64_t seed, double age = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double q = spec.capacity(age);
    std::vector<RawRecord> out;
    double z = 1.0;
    out.push_back({0.0, 0.0, synth_voltage(spec, 1.0, 0.0, age) + spec.noise_std * gauss(rng)});
    for (double t = sample_period_s;; t += sample_period_s) {
        z += current * sample_period_s / (kSecondsPerHour * q);
        if (z < 0.0) break;
        out.push_back({t, current, synth_voltage(spec, z, current, age) + spec.noise_std * gauss(rng)});
    }
    return out;
}

}  // namespace gpsoh
