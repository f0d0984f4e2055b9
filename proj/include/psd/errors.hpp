#pragma once

#include <stdexcept>
#include <string>

namespace psd {

/// Invalid configuration: bad dimensions, unknown names, inconsistent shapes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value (NaN/Inf) appeared in a loss, gradient or parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed data handed to a container or parser.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Not enough samples to form a requested batch.
class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested period cannot be realized within the env's velocity limit.
class InfeasiblePeriod : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace psd
