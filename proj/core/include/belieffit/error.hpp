#pragma once

#include <stdexcept>
#include <string>

namespace belieffit {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-range arguments.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Bayes normalizer collapsed to (numerically) zero.
class DegenerateEvidence : public Error {
 public:
  using Error::Error;
};

/// Configuration that cannot be realized (e.g. infeasible hole layout).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// The high-level policy has no admissible action (every hole fitted).
class NoAction : public Error {
 public:
  using Error::Error;
};

/// Parameter fitting diverged.
class OptimizationFailure : public Error {
 public:
  using Error::Error;
};

/// An estimator oracle was given data it cannot estimate from.
class DegenerateOracle : public Error {
 public:
  using Error::Error;
};

}  // namespace belieffit
