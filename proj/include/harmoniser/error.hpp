#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace harmoniser {

enum class ErrorCode {
    MalformedRecord,
    DuplicateId,
    NotCodeList,
    EmptyCorpus,
    UnknownDoc,
    BadMagic,
    UnsupportedVersion,
    DimensionMismatch,
    ZeroVector,
    NonFiniteValue,
    TruncatedFile,
    TrailingBytes,
    UnknownQuestion,
    EmptyMatrix,
    MissingSignal,
    MissingBaseRun,
    ScorerFailure,
    MissingTopic,
    EmptyRun,
    SampleTooLarge,
    NoAnnotations,
    InvalidLabel,
    DuplicateAnnotation,
    UnknownRun,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries one of the codes above so
/// that callers (CLI, HTTP layer, tests) can branch on the kind of failure.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code),
          detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace harmoniser
