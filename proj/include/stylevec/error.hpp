#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stylevec {

enum class ErrorCode {
    // argument / schema validation
    InvalidArgument,
    SchemaError,
    RoleViolation,
    NonFiniteScale,
    NonFiniteCoefficient,
    CoefficientOutOfRange,
    RankTooLarge,
    // data errors
    ShapeMismatch,
    DtypeMismatch,
    MalformedHeader,
    UnsupportedDtype,
    KeySetMismatch,
    EmptyIntersection,
    KeyNotInBase,
    KeyNotFound,
    SvdNonConvergence,
    BlockIndexOutOfRange,
    TopologyMismatch,
    DegenerateTrajectory,
    // environment
    IoError,
    MissingInput,
};

std::string_view error_code_name(ErrorCode code) noexcept;

/// Process exit status for the error class: 1 validation, 2 data, 3 I/O.
int exit_status(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace stylevec
