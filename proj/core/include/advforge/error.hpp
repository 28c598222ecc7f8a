#pragma once

#include <stdexcept>
#include <string>

namespace advforge {

/// Raised when an argument violates an operation's precondition
/// (shape mismatch, non-finite values, out-of-range label, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for unreadable, truncated or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advforge
