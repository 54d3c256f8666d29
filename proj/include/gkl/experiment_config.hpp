#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gkl/attack.hpp"
#include "gkl/dataset.hpp"
#include "gkl/pipeline.hpp"

namespace gkl {

/// Experiment configuration files: strict JSON with one block per concern.
/// Unknown keys are rejected with their full key path; missing required
/// blocks name the key. See configs/ for complete examples.

struct DatasetBlock {
  std::string generator;  // "blobs" | "spirals" | "idx"
  // blobs
  std::size_t classes = 10;
  std::vector<std::size_t> train_counts;  // explicit per-class counts, or
  std::size_t n_max = 0;                  // long-tail profile when n_max > 0
  double rho = 0.05;
  std::size_t test_per_class = 200;
  double radius = 4.0;
  double sigma = 1.0;
  // spirals
  std::size_t per_arm = 500;
  double noise = 0.1;
  std::size_t test_per_arm = 200;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct TeacherBlock {
  std::vector<std::size_t> layers;
  std::string checkpoint;            // load a pre-trained teacher, or
  std::optional<TrainConfig> train;  // pre-train one (hard-label CE)
};

struct ExperimentConfig {
  std::string kind;  // "distill" | "advtrain"
  DatasetBlock dataset;
  std::optional<TeacherBlock> teacher;               // distill
  std::optional<std::vector<std::size_t>> student;   // distill
  std::optional<std::vector<std::size_t>> model;     // advtrain
  TrainConfig train;
  AttackConfig attack;        // advtrain: training attack
  std::size_t eval_steps = 20;  // evaluation PGD iterations
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
};

/// Strict parse; throws ConfigError naming the offending key path.
ExperimentConfig parse_experiment_config(const nlohmann::json& root);

/// Reads and parses a config file; JSON syntax errors are reported with
/// line/column. Throws IoError (missing file) or ConfigError (bad content).
ExperimentConfig load_experiment_config(const std::string& path);

/// Inverse of parse_experiment_config; the echo embedded in checkpoints.
/// parse(to_json(c)) re-validates to an equivalent config.
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Evaluation attack derived from the training attack block: same radius and
/// step, eval_steps iterations, no random start, cross-entropy objective.
AttackConfig evaluation_attack(const ExperimentConfig& config);

/// Train/test datasets for the block, generated from (seed, fixed streams) or
/// loaded from the IDX paths.
std::pair<LabeledDataset, LabeledDataset> build_datasets(const DatasetBlock& block,
                                                         std::uint64_t seed);

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

}  // namespace gkl
