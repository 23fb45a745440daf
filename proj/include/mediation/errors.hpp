#pragma once

#include <stdexcept>
#include <string>

namespace mediation {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: missing columns, unparseable cells, invalid arguments.
// The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// Numerical or estimation failure on otherwise valid input (rank
// deficiency, empty cells, non-convergence, infeasible LP).
// The CLI maps these to exit code 3.
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mediation
