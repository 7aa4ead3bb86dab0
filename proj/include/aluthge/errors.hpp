#pragma once

#include <stdexcept>
#include <string>

namespace aluthge {

// Input matrix is not square or dimensions disagree.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf entries, malformed vectors, non-bijective permutations, ...
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scalar function was applied outside its domain.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// A mathematical precondition was violated (e.g. ||T|| > 1 for the ergodic average).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Iterative or factorization routine failed.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exponent weights would underflow (0 * -inf hazard in log-space products).
struct PrecisionWarning : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Polynomial surrogate could not reach the requested uniform bound.
struct ApproximationFailure : std::runtime_error {
  ApproximationFailure(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_error(achieved) {}
  double achieved_error;
};

}  // namespace aluthge
