#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace collapsar {

enum class ErrorCode {
  SingularEvaluation,
  SonicSingular,
  OutOfRange,
  BadStep,
  InsufficientTail,
  InvalidArgument,
  CflViolation,
  NonFinite,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularEvaluation: return "SingularEvaluation";
    case ErrorCode::SonicSingular: return "SonicSingular";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::BadStep: return "BadStep";
    case ErrorCode::InsufficientTail: return "InsufficientTail";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CflViolation: return "CflViolation";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace collapsar
