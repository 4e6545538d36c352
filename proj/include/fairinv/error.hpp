#pragma once

#include <stdexcept>
#include <string>

namespace fairinv {

/// Incompatible matrix / vector dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, labels, edges).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration key, value or combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN / Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backward pass was called with a cache produced for different weights.
class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A partition left fewer than two usable groups.
class DegeneratePartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairinv
