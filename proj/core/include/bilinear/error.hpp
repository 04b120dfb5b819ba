#pragma once

#include <stdexcept>
#include <string>

namespace bilinear {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value is outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A hidden state or parameter became NaN or infinite.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (tensor files, datasets, configs, checkpoints).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace bilinear
