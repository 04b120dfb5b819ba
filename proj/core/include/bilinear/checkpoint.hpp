#pragma once

// Model checkpoints: a key/value header followed by named tensors in the
// text tensor format. Loading a saved model reproduces it bit for bit.

#include <iosfwd>
#include <optional>
#include <string>

#include "bilinear/model.hpp"
#include "bilinear/tasks.hpp"

namespace bilinear {

struct Checkpoint {
  TransitionModel model;
  std::optional<TaskSpec> task;
};

/// Shape a model was built from (init widths are not recorded).
ModelShape shape_of(const TransitionModel& model);

void save_checkpoint(std::ostream& os, const TransitionModel& model, const TaskSpec* task = nullptr);
Checkpoint load_checkpoint(std::istream& is);

void save_checkpoint_file(const std::string& path, const TransitionModel& model,
                          const TaskSpec* task = nullptr);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace bilinear
