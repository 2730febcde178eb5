#include "protoncast/error.hpp"

namespace protoncast {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonPositiveFlux: return "NonPositiveFlux";
    case ErrorCode::GapTooLong: return "GapTooLong";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::MisalignedTime: return "MisalignedTime";
    case ErrorCode::NoEvent: return "NoEvent";
    case ErrorCode::InsufficientContext: return "InsufficientContext";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::OnsetMismatch: return "OnsetMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::WrongChannel: return "WrongChannel";
    case ErrorCode::TooFewEvents: return "TooFewEvents";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NearZeroReference: return "NearZeroReference";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidMix: return "InvalidMix";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::UnknownEvent: return "UnknownEvent";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Io:
      return false;
    default:
      return true;
  }
}

}  // namespace protoncast
