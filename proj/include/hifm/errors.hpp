#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace hifm {

// Bad arguments to a sampler or hyperparameter set.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input data, schema, or configuration. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear-algebra or sampling failure (non-SPD matrix after jitter, singular
// solve, divergent update). CLI maps this to exit code 1. Carries the minimum
// eigenvalue of the offending matrix when one is known.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what,
                          double min_eigenvalue = std::numeric_limits<double>::quiet_NaN())
      : std::runtime_error(what), min_eigenvalue_(min_eigenvalue) {}

  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

}  // namespace hifm
