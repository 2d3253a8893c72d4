#pragma once

#include <stdexcept>
#include <string>

namespace sg {

/// Malformed or out-of-range input (bad parameters, unparsable files).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The instance admits no dispatch satisfying the operator's constraints.
class InfeasibleInstance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The QP solver could not certify a solution.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A closed-form result was requested outside the conditions it was derived under.
class PreconditionsNotMet : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sg
