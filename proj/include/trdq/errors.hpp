#ifndef TRDQ_ERRORS_HPP
#define TRDQ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace trdq {

// Dimension or layout mismatch between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input outside the mathematical domain of an operation (NaN/Inf, empty
// tensor, zero vector where a direction is required, out-of-range index).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Calibration data does not cover every required (layer, timestep) key.
struct CoverageError : std::runtime_error {
    explicit CoverageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated file container.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Serialized parameters incompatible with the requested model configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure while reading or writing an artifact.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trdq

#endif
