#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace t2iaudit {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  Degenerate,        // zero spread: a perturbation or distribution is undefined
  InsufficientData,  // too few samples to build a distribution
  Parse,
  Io,
  BadDims,
  UnsupportedConditioning,
  OverLength,
  Transport,
  Internal,
};

std::string_view to_string(ErrorCode code);

class AuditError : public std::runtime_error {
 public:
  AuditError(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by model backends; carries the wire-protocol error code where one applies.
class BackendError : public AuditError {
 public:
  BackendError(ErrorCode code, const std::string& message, bool transient = false)
      : AuditError(code, message), transient_(transient) {}

  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

}  // namespace t2iaudit
