#ifndef MECO_ERROR_HPP
#define MECO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace meco {

/// Input data violates a documented invariant. The message names the field.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver could not produce a result (bracketing failure, non-finite
/// objective, non-convergence).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace meco

#endif  // MECO_ERROR_HPP
