#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voiceguard {

enum class ErrorKind {
  TooShort,
  ShapeMismatch,
  InvalidArgument,
  UnsupportedRate,
  ParamMismatch,
  NonFinite,
  InsufficientVoice,
  MalformedFile,
  IncompatibleModel,
  Io,
  Unavailable,
  Usage,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::TooShort: return "too_short";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::UnsupportedRate: return "unsupported_rate";
    case ErrorKind::ParamMismatch: return "param_mismatch";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::InsufficientVoice: return "insufficient_voice";
    case ErrorKind::MalformedFile: return "malformed_file";
    case ErrorKind::IncompatibleModel: return "incompatible_model";
    case ErrorKind::Io: return "io";
    case ErrorKind::Unavailable: return "unavailable";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

/// Every failure surfaced by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace voiceguard
