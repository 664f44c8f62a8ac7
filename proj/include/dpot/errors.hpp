#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dpot {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the domain of the operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or inconsistent input data (sizes, non-finite entries, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method hit its iteration cap.
class IterationLimitError : public std::runtime_error {
 public:
  IterationLimitError(const std::string& what, double last_violation)
      : std::runtime_error(what), last_violation_(last_violation) {}
  double last_violation() const noexcept { return last_violation_; }

 private:
  double last_violation_;
};

/// A density exceeded the envelope bound given to an accept-reject sampler.
class BoundViolationError : public DomainError {
 public:
  BoundViolationError(const std::string& what, std::vector<double> location, double value)
      : DomainError(what), location_(std::move(location)), value_(value) {}
  const std::vector<double>& location() const noexcept { return location_; }
  double value() const noexcept { return value_; }

 private:
  std::vector<double> location_;
  double value_;
};

/// An accept-reject sampler accepted almost nothing.
class StarvationError : public std::runtime_error {
 public:
  StarvationError(const std::string& what, double acceptance_rate)
      : std::runtime_error(what), acceptance_rate_(acceptance_rate) {}
  double acceptance_rate() const noexcept { return acceptance_rate_; }

 private:
  double acceptance_rate_;
};

/// A time integrator produced a non-finite state.
class BlowUpError : public NumericError {
 public:
  BlowUpError(const std::string& what, double time) : NumericError(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A runtime invariant (lower bound, plan optimality) failed during training.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged again after the single learning-rate recovery.
class TrainingAbort : public NumericError {
 public:
  TrainingAbort(const std::string& what, long step) : NumericError(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// File could not be read, written or decoded.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpot
