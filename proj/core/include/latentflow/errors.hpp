#pragma once

#include <stdexcept>
#include <string>

namespace latentflow {

/// Malformed or inconsistent input data (CSV content, panel shapes, grids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument outside an operation's domain.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace latentflow
