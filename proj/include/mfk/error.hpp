#pragma once

#include <stdexcept>
#include <string>

namespace mfk {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected input: dimension mismatch, out-of-range parameter, bad shape.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent run configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Blow-up, Picard non-convergence, negative density (CLI exit code 3).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// A declared Lipschitz or ellipticity bound does not hold for the model.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(std::string hypothesis, const std::string& what)
      : Error(hypothesis + ": " + what), hypothesis_(std::move(hypothesis)) {}

  const std::string& hypothesis() const noexcept { return hypothesis_; }

 private:
  std::string hypothesis_;
};

}  // namespace mfk
