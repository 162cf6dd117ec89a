#include "vxp/error.hpp"

namespace vxp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::AllPointsCulled: return "AllPointsCulled";
    case ErrorCode::NoVisibleVoxels: return "NoVisibleVoxels";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonPositiveP: return "NonPositiveP";
    case ErrorCode::NonPositiveBeta: return "NonPositiveBeta";
    case ErrorCode::NoPositive: return "NoPositive";
    case ErrorCode::NoNegative: return "NoNegative";
    case ErrorCode::NoCorrespondences: return "NoCorrespondences";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::HeaderMismatch: return "HeaderMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NoValidQueries: return "NoValidQueries";
    case ErrorCode::MissingTimestamps: return "MissingTimestamps";
    case ErrorCode::InsufficientRuns: return "InsufficientRuns";
    case ErrorCode::DriftDetected: return "DriftDetected";
  }
  return "Unknown";
}

}  // namespace vxp
