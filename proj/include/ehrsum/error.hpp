#pragma once

#include <stdexcept>
#include <string>

namespace ehrsum {

// Bad user input: malformed files, unknown labels, inconsistent shapes.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures that happen while doing the work (I/O, divergence).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ehrsum
