#include "stylevec/error.hpp"

namespace stylevec {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::RoleViolation: return "RoleViolation";
    case ErrorCode::NonFiniteScale: return "NonFiniteScale";
    case ErrorCode::NonFiniteCoefficient: return "NonFiniteCoefficient";
    case ErrorCode::CoefficientOutOfRange: return "CoefficientOutOfRange";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DtypeMismatch: return "DtypeMismatch";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::KeySetMismatch: return "KeySetMismatch";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::KeyNotInBase: return "KeyNotInBase";
    case ErrorCode::KeyNotFound: return "KeyNotFound";
    case ErrorCode::SvdNonConvergence: return "SvdNonConvergence";
    case ErrorCode::BlockIndexOutOfRange: return "BlockIndexOutOfRange";
    case ErrorCode::TopologyMismatch: return "TopologyMismatch";
    case ErrorCode::DegenerateTrajectory: return "DegenerateTrajectory";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingInput: return "MissingInput";
    }
    return "Unknown";
}

int exit_status(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaError:
    case ErrorCode::RoleViolation:
    case ErrorCode::NonFiniteScale:
    case ErrorCode::NonFiniteCoefficient:
    case ErrorCode::CoefficientOutOfRange:
    case ErrorCode::RankTooLarge:
        return 1;
    case ErrorCode::IoError:
    case ErrorCode::MissingInput:
        return 3;
    default:
        return 2;
    }
}

} // namespace stylevec
