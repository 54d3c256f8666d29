#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gkl/attack.hpp"
#include "gkl/class_stats.hpp"
#include "gkl/dataset.hpp"
#include "gkl/divergence.hpp"
#include "gkl/mlp.hpp"

namespace gkl {

/// Desk-scale end-to-end recipes: hard-label training, knowledge distillation
/// with a frozen teacher, and TRADES-style adversarial training, all single
/// threaded and bit-reproducible given (seed, config). Random streams are
/// derived from the config seed per purpose (init / shuffle / attack / eval),
/// so switching the divergence never shifts any other randomness — the
/// KL-vs-decoupled training-trajectory equivalence depends on that.

enum class LossKind { kHardCe, kKl, kDkl, kGkl, kJsd };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  LrSchedule schedule = LrSchedule::kCosine;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::kKl;
  LossConfig loss_config;
  double hard_label_weight = 1.0;  // weight of CE against the true labels
  double divergence_weight = 1.0;  // weight of the divergence term (lambda)
};

struct GroupSplit {
  std::vector<std::size_t> many;
  std::vector<std::size_t> medium;
  std::vector<std::size_t> few;
};

/// Classes ordered by descending sample count (ties to the lower index);
/// many/few are the round(0.3 * C) most/least frequent, medium the rest.
GroupSplit split_by_frequency(std::span<const std::size_t> class_counts);

struct ExperimentResult {
  std::vector<double> epoch_train_loss;
  std::vector<double> epoch_clean_acc;
  double clean_accuracy = 0.0;
  std::optional<double> robust_accuracy;  // present only for attacked runs
  std::vector<double> per_class_accuracy;
  std::optional<double> many_accuracy;
  std::optional<double> medium_accuracy;
  std::optional<double> few_accuracy;
  GroupSplit groups;
  std::vector<double> per_class_margin;
  std::vector<double> per_class_true_score;  // mean predicted score of the true class
  double wall_seconds = 0.0;  // reporting only; excluded from reproducibility
  std::uint64_t seed = 0;
};

/// Dispatch to the divergence selected by kind, with the distillation
/// temperature applied uniformly (logits / t, loss * t^2, gradients * t) for
/// the kinds whose signature has no config. kHardCe has no divergence and is
/// rejected here.
LossResult divergence_loss(LossKind kind, const LogitPair& pair, const LossConfig& config,
                           const ClassWeightTable* table = nullptr,
                           std::span<const int> labels = {});

/// Plain hard-label cross-entropy training; used to pre-train teachers.
MlpModel train_classifier(const std::vector<std::size_t>& layers, const LabeledDataset& train,
                          const TrainConfig& config);

/// Knowledge distillation: the student minimizes
///   hard_label_weight * CE(student, labels)
///   + divergence_weight * Loss(teacher logits, student logits)
/// with the frozen teacher always detached. The class table accumulates the
/// teacher's temperature-tau probabilities each batch and commits per epoch;
/// class-wise GKL reads it. loss = kHardCe gives the no-teacher baseline.
ExperimentResult distill(const MlpModel& teacher, const std::vector<std::size_t>& student_layers,
                         const LabeledDataset& train, const LabeledDataset& test,
                         const TrainConfig& config, MlpModel* student_out = nullptr,
                         ClassWeightTable* table_out = nullptr);

/// TRADES-style adversarial training: per batch, adversarial inputs from a
/// PGD attack on the divergence to the natural branch, then one SGD step on
///   hard_label_weight * CE(natural, labels)
///   + divergence_weight * Loss(natural logits, adversarial logits)
/// with gradients flowing through both branches (soft labels inside the CE
/// term stay detached, as the loss definitions specify). The class table is
/// built from natural-branch probabilities. Robustness is evaluated with
/// eval_attack on the test set.
ExperimentResult adversarial_train(const std::vector<std::size_t>& layers,
                                   const LabeledDataset& train, const LabeledDataset& test,
                                   const TrainConfig& config, const AttackConfig& train_attack,
                                   const AttackConfig& eval_attack, MlpModel* model_out = nullptr,
                                   ClassWeightTable* table_out = nullptr);

/// Clean accuracy, per-class accuracy/margins/mean true-class scores, and
/// robust accuracy when an attack config is given. group_counts (typically the
/// training-set class counts) selects the many/medium/few split; the data's
/// own counts are used when omitted.
ExperimentResult evaluate(const MlpModel& model, const LabeledDataset& data,
                          const AttackConfig* attack, Rng& rng,
                          std::span<const std::size_t> group_counts = {});

}  // namespace gkl
