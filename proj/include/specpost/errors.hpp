#pragma once

#include <stdexcept>
#include <string>

namespace specpost {

/// A computation produced a non-finite or degenerate result (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration file or flag could not be interpreted (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace specpost
