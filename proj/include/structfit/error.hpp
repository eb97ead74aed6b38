#pragma once

#include <stdexcept>
#include <string>

namespace structfit {

// Three families, mapped one-to-one onto the CLI exit codes 2/3/4.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace structfit
