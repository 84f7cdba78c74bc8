#pragma once

#include <stdexcept>
#include <string>

namespace dgm {

/// Shape or index mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A symmetric positive-definite factorization failed even after jitter escalation.
class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss or state evaluated to NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical integration produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Input outside the domain of a vector field (e.g. the sec(theta) pole of the quadrocopter).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dgm
