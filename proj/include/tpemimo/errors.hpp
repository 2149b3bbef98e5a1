#pragma once

#include <stdexcept>
#include <string>

namespace tpemimo {

// Bad user input: malformed config, dimension mismatch, invalid argument.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Channel Gram matrix numerically singular (reciprocal condition < 1e-12).
struct DegenerateChannelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loss became non-finite during training.
struct TrainingDivergedError : std::runtime_error {
  TrainingDivergedError(const std::string& what, int epoch_index)
      : std::runtime_error(what), epoch(epoch_index) {}
  int epoch;
};

// Normal-equations matrix too ill-conditioned for a reliable fit.
struct IllPosedFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unknown schema version or malformed persisted file.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tpemimo
