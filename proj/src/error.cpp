#include "harmoniser/error.hpp"

namespace harmoniser {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NotCodeList: return "NotCodeList";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownDoc: return "UnknownDoc";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::UnknownQuestion: return "UnknownQuestion";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::MissingSignal: return "MissingSignal";
    case ErrorCode::MissingBaseRun: return "MissingBaseRun";
    case ErrorCode::ScorerFailure: return "ScorerFailure";
    case ErrorCode::MissingTopic: return "MissingTopic";
    case ErrorCode::EmptyRun: return "EmptyRun";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::NoAnnotations: return "NoAnnotations";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DuplicateAnnotation: return "DuplicateAnnotation";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace harmoniser
