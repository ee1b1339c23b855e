#pragma once

#include <stdexcept>
#include <string>

namespace metatriage {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 2 (data or contract error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that cannot be decoded or violates a record invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Subset composition impossible under the requested recipe.
class CompositionError : public DataError {
 public:
  using DataError::DataError;
};

/// Synthetic generator configuration that cannot be realised.
class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

/// Caller broke an interface precondition (column mismatch, bad window...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss while fitting a linear model.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// I/O failure while reading or writing files.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace metatriage
