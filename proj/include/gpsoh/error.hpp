#pragma once

#include <stdexcept>
#include <string>

namespace gpsoh {

// Invalid user configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A configured column name that the input file does not have. The mapping is
// the thing to fix, so it is reported as a configuration error.
class ColumnMappingError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Malformed or insufficient input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filter or optimizer breakdown: NaN, non-PSD innovation, singular system (exit code 4).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violation on a library call.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument(what);
}

}  // namespace detail

}  // namespace gpsoh
