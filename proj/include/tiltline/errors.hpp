#pragma once

#include <stdexcept>
#include <string>

namespace tiltline {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Vector lengths that do not match their grid.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Constraint window that admits no admissible configuration.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked in a mode that does not support it.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed, truncated or version-mismatched checkpoint blob.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Experiment configuration that violates the schema.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Oracle computation refused because its estimated cost is too large.
class CostGuardError : public std::runtime_error {
 public:
  CostGuardError(const std::string& what, double estimate)
      : std::runtime_error(what), estimate_(estimate) {}
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

// Estimator refused because the sample carries too little information.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tiltline
