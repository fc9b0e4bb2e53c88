#pragma once

#include <stdexcept>
#include <string>

namespace audiotex {

/// Base class for every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data could not be read or decoded.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Shapes, sizes or parameters are inconsistent with the operation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical computation produced or received non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace audiotex
