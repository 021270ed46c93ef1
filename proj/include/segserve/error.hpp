#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segserve {

// Closed set of failure kinds. The HTTP layer maps each one to a status code
// and uses to_string() as the wire-level error code.
enum class ErrorCode {
    InvalidInput,
    DimensionMismatch,
    DegenerateLabels,
    SegmenterContractViolation,
    UnsupportedFormat,
    InvalidCategory,
    PersistError,
    NotFound,
    IllegalTransition,
    UsernameTaken,
    WeakPassword,
    AuthFailed,
    TokenInvalid,
    Forbidden,
    ResultNotReady,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace segserve
