#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"

namespace gpsoh {

enum class SegmentRole { Train, Test };

inline const char* to_string(SegmentRole r) { return r == SegmentRole::Train ? "train" : "test"; }

/// One contiguous discharge record. Sample 0 is the initial condition; every
/// later sample is a (propagate, update) step of the filter.
struct Segment {
    std::string cell_id;
    double age_days = 0.0;  // days since the first sample of the dataset
    double sample_period_s = 0.0;
    SegmentRole role = SegmentRole::Train;
    std::vector<double> time_s;
    std::vector<double> current;  // A, negative on discharge
    std::vector<double> voltage;  // V

    std::size_t size() const { return time_s.size(); }
    double duration_s() const { return time_s.empty() ? 0.0 : time_s.back() - time_s.front(); }

    void validate() const {
        if (time_s.size() != current.size() || time_s.size() != voltage.size())
            throw DataError("segment: series lengths differ");
        if (time_s.size() < 2) throw DataError("segment: needs at least two samples");
        for (std::size_t k = 1; k < time_s.size(); ++k)
            if (!(time_s[k] > time_s[k - 1])) throw DataError("segment: time must be strictly increasing");
        for (std::size_t k = 0; k < time_s.size(); ++k)
            if (!std::isfinite(time_s[k]) || !std::isfinite(current[k]) || !std::isfinite(voltage[k]))
                throw DataError("segment: non-finite sample");
        if (!std::isfinite(age_days) || age_days < 0.0) throw DataError("segment: age must be non-negative");
    }
};

}  // namespace gpsoh
