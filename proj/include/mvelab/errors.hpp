#pragma once

#include <stdexcept>
#include <string>

namespace mvelab {

/// Raised when a caller breaks a documented precondition (shape mismatch, bad config, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when training produces non-finite values.
class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace mvelab
