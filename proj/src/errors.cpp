#include "dpd/errors.hpp"

namespace dpd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OffTrack: return "OffTrack";
    case ErrorCode::AmbiguousProjection: return "AmbiguousProjection";
    case ErrorCode::InvalidLane: return "InvalidLane";
    case ErrorCode::InvalidTrack: return "InvalidTrack";
    case ErrorCode::OffRoad: return "OffRoad";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InsufficientSpace: return "InsufficientSpace";
    case ErrorCode::InconsistentAffordance: return "InconsistentAffordance";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::SingleTrack: return "SingleTrack";
    case ErrorCode::AboveHorizon: return "AboveHorizon";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace dpd
