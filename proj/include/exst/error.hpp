#pragma once

#include <stdexcept>
#include <string>

namespace exst {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete kind onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration or invalid arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: non-PD matrix, non-finite value, rejection cap hit.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A quasi-Monte Carlo estimate or an optimizer did not reach its tolerance
// within budget and the caller asked for strict convergence.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace exst
