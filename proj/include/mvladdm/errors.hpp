#pragma once

#include <stdexcept>
#include <string>

namespace mvladdm {

// Error taxonomy shared across the library. Every throw site names the
// offending quantity in the message; callers catch by type.

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonScalarLoss : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonPositivePrecision : std::domain_error {
    using std::domain_error::domain_error;
};

struct DegenerateInput : std::domain_error {
    using std::domain_error::domain_error;
};

struct VolumeTooSmall : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct OutOfBoundsStart : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ScaleMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InsufficientData : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ViewLengthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct TooManyViews : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LabelOutOfRange : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct EmptyDataset : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InconsistentViews : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LengthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateLabels : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DimMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, long line) : std::runtime_error(msg), line_number(line) {}
    long line_number;
};

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidSpec : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct CheckpointMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mvladdm
