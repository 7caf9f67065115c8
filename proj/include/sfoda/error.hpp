#pragma once

#include <stdexcept>
#include <string>

namespace sfoda {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition on arguments was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or a numerically failed run.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Either pseudo-label set is empty, so adaptation cannot start.
class AdaptationPreconditionError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration (unknown key, bad value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: CSV schema, unreadable files, missing artifacts.
class DataError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined, e.g. a class has no ground-truth instance.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace sfoda
