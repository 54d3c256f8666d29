#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "gkl/class_stats.hpp"
#include "gkl/mlp.hpp"

namespace gkl {

/// JSON model checkpoints. Parameters are stored as nested decimal arrays via
/// the shortest round-trip representation, so load(save(m)) reproduces every
/// parameter — and therefore every logit — bit-exactly. Class statistics and
/// the experiment-config echo ride along when present.
struct Checkpoint {
  int format_version = 1;
  MlpModel model;
  std::optional<Matrix> class_table_rows;
  long class_table_epoch = 0;
  nlohmann::json config_echo;  // null when the model was saved without one
};

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const ClassWeightTable* table = nullptr,
                     const nlohmann::json& config_echo = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace gkl
