#pragma once

#include <stdexcept>
#include <string>

namespace emoedit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions of arguments do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid settings or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint, basis or feature cache does not match what it is used with
/// (CLI exit code 3).
class ModelMismatch : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or inconsistent input data (CLI exit code 4).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a meaningful answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoedit
