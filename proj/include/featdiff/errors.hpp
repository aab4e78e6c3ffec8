#pragma once

#include <stdexcept>
#include <string>

namespace featdiff {

/// Invalid experiment or module configuration (bad partition, missing class, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A call-site argument violates the operation's precondition.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite or degenerate numbers (zero-norm vectors, NaN losses).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss; the message carries the epoch/step.
struct DivergenceError : NumericError {
  using NumericError::NumericError;
};

/// A class has too few samples to estimate its statistics.
struct DegenerateClassError : std::runtime_error {
  DegenerateClassError(int class_id, const std::string& what)
      : std::runtime_error(what), class_id(class_id) {}
  int class_id;
};

/// A pipeline stage failed; names the phase and stage. Completed stages
/// before it stay on disk and are picked up by a resume.
struct StageError : std::runtime_error {
  StageError(int phase, std::string stage, const std::string& what)
      : std::runtime_error("phase " + std::to_string(phase) + ", stage '" + stage + "': " + what),
        phase(phase),
        stage(std::move(stage)) {}
  int phase;
  std::string stage;
};

}  // namespace featdiff
