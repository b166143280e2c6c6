#pragma once

#include <stdexcept>
#include <string>

namespace uqsr {

// File could not be read/written or decoded at the byte level.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Content decoded but is not in a supported format (e.g. alpha channels).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or usage-level precondition violation.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/image dimensions incompatible with the requested operation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric input outside the valid domain of an operation.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training aborted on a non-finite loss; carries diagnostic state.
struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& msg, int epoch_, int step_)
      : std::runtime_error(msg), epoch(epoch_), step(step_) {}
  int epoch = 0;
  int step = 0;
};

}  // namespace uqsr
