#pragma once

#include <stdexcept>
#include <string>

namespace grpolab {

// Bad experiment or module configuration (unknown keys, invalid dims, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Calibration targets that no policy on this grammar can satisfy.
// The message names the violated bound.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A token sequence that does not fit the grammar.
struct InvalidSequenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite parameter; carries the aborting step.
struct DivergenceError : std::runtime_error {
  int step;
  DivergenceError(int step_, const std::string& msg)
      : std::runtime_error(msg), step(step_) {}
};

}  // namespace grpolab
