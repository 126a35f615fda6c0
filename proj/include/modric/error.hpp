#pragma once

#include <stdexcept>
#include <string>

namespace modric {

enum class ErrorCode {
  NotPsd,
  NotPd,
  NonFinite,
  DimensionMismatch,
  KindMismatch,
  DowndateBreaksPd,
  InnerSystemSingular,
  InfeasibleOrUnbounded,
  RangeConditionViolated,
  InvalidDelta,
  InvalidProblem,
  IterationLimit,
  UnboundedDirection,
  CycleDetected,
  InfeasibleStart,
  ThresholdExceeded,
  Io,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-readable code and, when relevant, the stage
/// index at which the failure was detected (-1 otherwise).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int stage = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        stage_(stage),
        message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  int stage() const noexcept { return stage_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  int stage_;
  std::string message_;
};

}  // namespace modric
