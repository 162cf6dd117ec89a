#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vxp {

enum class ErrorCode {
  // tensor / autodiff
  ShapeMismatch,
  NonFinite,
  NotScalar,
  // geometry
  EmptyCloud,
  AllPointsCulled,
  NoVisibleVoxels,
  InvalidConfig,
  // sparse3d
  EmptyGrid,
  ChannelMismatch,
  TooLarge,
  // heads
  TooSmall,
  EmptyInput,
  NonPositiveP,
  // losses
  NonPositiveBeta,
  NoPositive,
  NoNegative,
  NoCorrespondences,
  // data-io
  MalformedFile,
  IoError,
  MissingKey,
  ParseError,
  HeaderMismatch,
  DuplicateId,
  EmptyResult,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  // trainer
  DegenerateDataset,
  MissingPrerequisite,
  // retrieval
  DimMismatch,
  Empty,
  InvalidK,
  NoValidQueries,
  MissingTimestamps,
  InsufficientRuns,
  // docs
  DriftDetected,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `code()` identifies the failure class; the message
/// carries location details (file, line, element) where they exist.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vxp
