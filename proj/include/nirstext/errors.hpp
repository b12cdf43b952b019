#pragma once

#include <stdexcept>
#include <string>

namespace nirstext {

// Config errors exit the CLI with code 2, data errors with 3, numerical
// failures with 4. Anything else that escapes is a plain bug.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nirstext
