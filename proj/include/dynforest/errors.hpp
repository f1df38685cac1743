#pragma once

#include <stdexcept>
#include <string>

namespace dynforest {

// Raised when input data or configuration violates a documented contract.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a quantity is not estimable (e.g. censoring survival hits
// zero inside the requested window). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dynforest
