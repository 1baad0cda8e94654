#pragma once

#include <stdexcept>
#include <string>

namespace rawvoice {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed container or file contents (bad magic, wrong header fields).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid but unsupported content (codec, bit depth, rate).
class UnsupportedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Truncated or checksum-failing file.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Text input (manifest, config) that does not parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Tensor or signal dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a computation (empty list, length mismatch).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A metric is mathematically undefined for the given inputs.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace rawvoice
