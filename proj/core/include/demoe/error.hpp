#pragma once

#include <stdexcept>
#include <string>

namespace demoe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents are inconsistent with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument or configuration value is outside its valid range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or codec failure (PNG, JSON, manifests).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace demoe
