#pragma once

#include <stdexcept>
#include <string>

namespace mergelab {

// Failure categories; the CLI maps these onto process exit codes
// (config/usage -> 1, everything else -> 2).
enum class ErrorKind {
  config,     // invalid configuration or CLI usage
  structure,  // shape/layout mismatch between tensors or parameter sets
  format,     // malformed file on disk
  input,      // invalid argument value (label out of range, bad alpha, ...)
  range,      // index/step outside its valid interval
  integrity,  // checkpoint hash mismatch
  compute,    // diverged training, failed aggregation, other runtime faults
  io,         // filesystem failure
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace mergelab
