#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssfo {

// Violated call precondition (empty prefix, non-positive temperature, ...).
struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Token id out of range, or two models disagree on their vocabulary.
struct vocab_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad run configuration: unknown keys, invalid mode/hyperparameter combos.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Data-generation failure (e.g. every pair filtered out).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Schema violation in an input file; `line` is 1-based.
struct schema_error : data_error {
  schema_error(const std::string& file, std::size_t line_no, const std::string& what_arg)
      : data_error(file + ":" + std::to_string(line_no) + ": " + what_arg), line(line_no) {}
  std::size_t line;
};

// Optimization blew up (NaN loss); message names the step.
struct train_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure; message carries the path.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ssfo
