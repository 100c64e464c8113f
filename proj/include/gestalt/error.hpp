#pragma once

#include <stdexcept>
#include <string>

namespace gestalt {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (files, tensors, masks, manifests).
class DataError : public Error {
 public:
  using Error::Error;
};

// A procedural generator exhausted its retry budget.
class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values or degenerate statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gestalt
