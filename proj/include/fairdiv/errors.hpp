#pragma once

#include <stdexcept>
#include <string>

namespace fairdiv {

/// Machine-readable error categories. The string form is what the CLI and
/// the session service report back to callers.
enum class ErrorCode {
  ShapeMismatch,
  NonSegmentShare,
  OutOfRange,
  InvalidSpec,
  NoConvergence,
  Unsupported,
  NonMonotone,
  InvariantViolation,
  EmptyAcceptance,
  MalformedPartition,
  BadBudgetShare,
  NonIncreasingBid,
  WrongPhase,
  NotYourTurn,
  InvalidAction,
  ReplayMismatch,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonSegmentShare: return "NonSegmentShare";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::NonMonotone: return "NonMonotone";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::EmptyAcceptance: return "EmptyAcceptance";
    case ErrorCode::MalformedPartition: return "MalformedPartition";
    case ErrorCode::BadBudgetShare: return "BadBudgetShare";
    case ErrorCode::NonIncreasingBid: return "NonIncreasingBid";
    case ErrorCode::WrongPhase: return "WrongPhase";
    case ErrorCode::NotYourTurn: return "NotYourTurn";
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::ReplayMismatch: return "ReplayMismatch";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Solver failures carry the best residual reached before giving up.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, double residual)
      : Error(ErrorCode::NoConvergence, what + " (best residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Errors raised by the protocol engines are protocol errors (CLI exit code 3).
inline bool is_protocol_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAcceptance:
    case ErrorCode::MalformedPartition:
    case ErrorCode::BadBudgetShare:
    case ErrorCode::NonIncreasingBid:
    case ErrorCode::WrongPhase:
    case ErrorCode::NotYourTurn:
    case ErrorCode::InvalidAction:
    case ErrorCode::ReplayMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace fairdiv
