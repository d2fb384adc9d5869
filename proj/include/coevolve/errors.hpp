#pragma once

#include <stdexcept>
#include <string>

namespace coevolve {

// Malformed configuration or arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates an invariant (bad row, id out of range, out-of-order event, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value or degenerate quantity showed up during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coevolve
