#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memdb {

enum class ErrorCode {
  kOk = 0,
  // validation
  kValidation,
  kDimensionMismatch,
  kNotUnitNorm,
  kEmptyKind,
  kMissingHighView,
  kInvalidNamespace,
  kInvalidMeta,
  kInvalidUtf8,
  kZeroVector,
  kZeroPrefix,
  kInvalidK,
  kUntrained,
  // storage
  kEmptyBatch,
  kStorageFull,
  kChecksumFailure,
  kCorruptInterior,
  kNotFound,
  kInvalidWindow,
  kSegmentActive,
  kIo,
  // graph / coherence
  kSourceNotFound,
  kEndpointMissing,
  kVertexNotFound,
  // query
  kInvalidSpec,
  kEmbedderMissing,
  kNoViews,
  // service
  kBadRequest,
  kAddressInUse,
  kDataDirLocked,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception type used across the engine. The code is part of the wire
/// protocol (see docs/protocol.md), the message is free text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memdb
