#pragma once

#include <stdexcept>
#include <string>

namespace masclucb {

// Invalid user-supplied parameters (topology, config file, sweep values).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Randomized construction gave up (disconnected graph, rejection sampling).
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical input violates a documented precondition.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. stepping an uninitialized state.
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace masclucb
