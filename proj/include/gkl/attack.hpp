#pragma once

#include <span>

#include "gkl/dataset.hpp"
#include "gkl/matrix.hpp"
#include "gkl/mlp.hpp"
#include "gkl/rng.hpp"

namespace gkl {

/// L-infinity sign-gradient attacks (FGSM is the one-step case of PGD) and
/// robust-accuracy evaluation against a frozen model.

enum class AttackObjective {
  kCrossEntropy,  // ascend CE against the true labels
  kKlToNatural,   // ascend KL(natural probabilities || adversarial), natural detached
};

struct AttackConfig {
  double epsilon = 0.0;    // L-inf radius in input units
  double step_size = 0.0;  // per-iteration step
  int steps = 1;
  bool random_start = false;  // uniform start inside the ball
  AttackObjective objective = AttackObjective::kCrossEntropy;
};

/// Iterated sign-gradient ascent of the configured objective with exact
/// projection onto the epsilon-ball around inputs intersected with the domain
/// box. natural_logits is required by (and only read for) the kKlToNatural
/// objective. The model is frozen; rng is consumed only for random starts.
Matrix pgd_attack(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                  const Matrix* natural_logits, const AttackConfig& config, Rng& rng,
                  double box_lo, double box_hi);

/// Mean objective value at the given (already attacked) inputs; used to check
/// that more attack iterations do not decrease the objective.
double attack_objective_value(const MlpModel& model, const Matrix& adv_inputs,
                              std::span<const int> labels, const Matrix* natural_logits,
                              AttackObjective objective);

/// Fraction of samples still classified correctly after a PGD attack with the
/// given config (argmax ties broken toward the lowest index). epsilon = 0
/// reduces to clean accuracy. Deterministic given the rng state.
double robust_accuracy(const MlpModel& model, const LabeledDataset& data,
                       const AttackConfig& config, Rng& rng);

double clean_accuracy(const MlpModel& model, const LabeledDataset& data);

/// argmax with ties broken toward the lowest index.
std::size_t argmax_row(std::span<const double> row);

}  // namespace gkl
