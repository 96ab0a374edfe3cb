#pragma once

#include <stdexcept>
#include <string>

namespace tsmux {

/// Base class for all library errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or incomplete experiment configuration (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: no root in bracket, singular coupling, unreachable target (exit code 2).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Fock-space truncation became unsafe (exit code 2).
class TruncationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Missing, stale or tampered cache entry (exit code 3).
class CacheError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsmux
