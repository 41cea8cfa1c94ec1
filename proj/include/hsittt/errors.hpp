#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hsittt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, malformed files, out-of-range values. CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameters during optimization. CLI exit code 2.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  // Index of the step that produced the non-finite value.
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Non-finite activations inside a forward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures. CLI exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsittt
