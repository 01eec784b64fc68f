#pragma once

#include <stdexcept>
#include <string>

namespace lmk {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError/DimensionError -> 2, DataError -> 3, NumericError/TrainingError -> 4.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration / parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid constructor parameter (scale <= 0, elastic magnitude above bound, ...).
class InvalidParameter : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Shape mismatch between tensors, images, or landmark sets.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Coordinate outside the image domain where one is required.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, zero norms, singular systems.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A loss with no valid terms (e.g. every landmark pair left the domain).
class UndefinedLoss : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed or missing dataset files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling ran out of retries.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace lmk
