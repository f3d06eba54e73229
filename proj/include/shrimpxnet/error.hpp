#pragma once

#include <stdexcept>
#include <string>

namespace sxn {

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer dimension mismatches and invalid geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values, unknown keys, invalid flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset problems: missing directories, empty classes, undecodable files.
class DataError : public Error {
 public:
  using Error::Error;
};

// File read/write failures, corrupt or truncated checkpoints.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (NaN/Inf loss etc).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sxn
