#include "segserve/error.hpp"

namespace segserve {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::SegmenterContractViolation: return "SegmenterContractViolation";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::InvalidCategory: return "InvalidCategory";
    case ErrorCode::PersistError: return "PersistError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::UsernameTaken: return "UsernameTaken";
    case ErrorCode::WeakPassword: return "WeakPassword";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::TokenInvalid: return "TokenInvalid";
    case ErrorCode::Forbidden: return "Forbidden";
    case ErrorCode::ResultNotReady: return "ResultNotReady";
    }
    return "Unknown";
}

} // namespace segserve
