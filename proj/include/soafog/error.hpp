#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soafog {

enum class ErrorCode {
    Syntax,
    Validation,
    EmptyLayer,
    NonConvexClip,
    KindMismatch,
    DuplicateKey,
    MissingKey,
    UnknownLayer,
    OversizeImage,
    BadCredentials,
    LockedOut,
    Unauthorized,
    InvalidChange,
    BadKeyLength,
    StorageFull,
    BudgetUnsatisfiable,
    UnknownProcess,
    ParamError,
    MissingAttr,
    UnknownNode,
    BadMac,
    MalformedItem,
    ConfigError,
    WorkloadMismatch,
    Io,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries a code; `detail` holds the
// machine-readable subject (offending param name, duplicated key value,
// layer id, feature index) so callers can map it onto wire responses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string detail = {})
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace soafog
