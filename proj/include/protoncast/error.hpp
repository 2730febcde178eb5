#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protoncast {

enum class ErrorCode {
  // ingestion
  EmptySeries,
  MalformedRow,
  NonPositiveFlux,
  GapTooLong,
  NonMonotonicTime,
  MisalignedTime,
  NoEvent,
  InsufficientContext,
  ChannelMismatch,
  OnsetMismatch,
  DuplicateId,
  // preprocessing
  WrongChannel,
  TooFewEvents,
  // numerics / model
  ShapeMismatch,
  NonFiniteLoss,
  // evaluation
  NearZeroReference,
  // persistence
  CorruptCheckpoint,
  VersionMismatch,
  // synthesis
  InvalidParams,
  InvalidMix,
  // cli
  InsufficientHistory,
  UnknownEvent,
  InvalidConfig,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

// Validation errors map to CLI exit code 1, everything else to 2.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace protoncast
