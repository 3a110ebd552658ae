#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppgfuse {

enum class ErrorCode {
    EmptySet,
    NoOverlap,
    RateMismatch,
    TooShort,
    UnstableDesign,
    ZeroVariance,
    LengthMismatch,
    NoCleanSegments,
    NoReferenceBeats,
    SingularWhitening,
    InvalidScenario,
    InvalidConfig,
    ParseError,
    RateInferenceError,
    GridMismatch,
    IoError,
    NonFiniteSample,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace ppgfuse
