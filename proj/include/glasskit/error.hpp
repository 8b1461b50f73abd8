#pragma once

#include <stdexcept>
#include <string>

namespace glasskit {

/// Raised when an argument violates a documented precondition.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// File-system or codec failure (missing file, malformed PNG, truncated sidecar).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A check that ran to completion but did not pass (gradient check, diverged training).
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace glasskit
