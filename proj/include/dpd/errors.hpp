#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpd {

enum class ErrorCode {
  OffTrack,
  AmbiguousProjection,
  InvalidLane,
  InvalidTrack,
  OffRoad,
  OutOfRange,
  InsufficientSpace,
  InconsistentAffordance,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyDataset,
  EmptyInput,
  IoFailure,
  CorruptRecord,
  SpecMismatch,
  SingleTrack,
  AboveHorizon,
  BindFailure,
  ConfigError,
  ParseError,
  PreconditionViolated,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` identifies
// the failure class so callers (and the CLI exit-status mapping) can branch.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dpd
