#pragma once

#include <stdexcept>
#include <string>

namespace gpm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A vector that must be normalized (or averaged and normalized) has
/// vanishing norm.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// An operation's documented precondition does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is missing, malformed or out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file on disk is truncated, malformed or fails validation.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed data that violates a structural invariant (for example a
/// duplicated place id).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpm
