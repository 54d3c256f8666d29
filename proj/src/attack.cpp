#include "gkl/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "gkl/softmax.hpp"

namespace gkl {

namespace {

/// Gradient of the mean attack objective w.r.t. the adversarial logits.
Matrix objective_logit_grad(const Matrix& logits, std::span<const int> labels,
                            const Matrix* natural_logits, AttackObjective objective) {
  const std::size_t batch = logits.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Matrix grad = softmax_rows(logits);
  if (objective == AttackObjective::kCrossEntropy) {
    for (std::size_t b = 0; b < batch; ++b)
      grad(b, static_cast<std::size_t>(labels[b])) -= 1.0;
  } else {
    if (natural_logits == nullptr)
      throw std::invalid_argument("pgd_attack: kKlToNatural objective needs natural logits");
    const Matrix s_nat = softmax_rows(*natural_logits);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.flat()[i] -= s_nat.flat()[i];
  }
  for (double& v : grad.flat()) v *= inv_batch;
  return grad;
}

}  // namespace

Matrix pgd_attack(const MlpModel& model, const Matrix& inputs, std::span<const int> labels,
                  const Matrix* natural_logits, const AttackConfig& config, Rng& rng,
                  double box_lo, double box_hi) {
  if (config.epsilon < 0.0) throw std::invalid_argument("pgd_attack: epsilon must be >= 0");
  if (config.steps < 1) throw std::invalid_argument("pgd_attack: steps must be >= 1");
  if (!(config.step_size > 0.0)) throw std::invalid_argument("pgd_attack: step_size must be > 0");
  if (config.objective == AttackObjective::kCrossEntropy && labels.size() != inputs.rows())
    throw std::invalid_argument("pgd_attack: label count mismatch");

  const double eps = config.epsilon;
  Matrix adv = inputs;
  if (config.random_start && eps > 0.0) {
    for (double& v : adv.flat()) v += rng.uniform(-eps, eps);
  }
  const auto project = [&](Matrix& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double center = inputs.flat()[i];
      double v = x.flat()[i];
      if (v > center + eps) v = center + eps;
      if (v < center - eps) v = center - eps;
      if (v > box_hi) v = box_hi;
      if (v < box_lo) v = box_lo;
      x.flat()[i] = v;
    }
  };
  project(adv);

  for (int it = 0; it < config.steps; ++it) {
    ForwardCache cache;
    const Matrix logits = mlp_forward(model, adv, &cache);
    const Matrix grad_logits =
        objective_logit_grad(logits, labels, natural_logits, config.objective);
    const MlpGradients grads = mlp_backward(model, cache, grad_logits, /*want_input_grads=*/true);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double g = grads.inputs.flat()[i];
      const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      adv.flat()[i] += config.step_size * sign;
    }
    project(adv);
  }
  return adv;
}

double attack_objective_value(const MlpModel& model, const Matrix& adv_inputs,
                              std::span<const int> labels, const Matrix* natural_logits,
                              AttackObjective objective) {
  const Matrix logits = mlp_forward(model, adv_inputs);
  const std::size_t batch = logits.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  if (objective == AttackObjective::kCrossEntropy) {
    const Matrix log_probs = log_softmax_rows(logits);
    for (std::size_t b = 0; b < batch; ++b)
      total -= log_probs(b, static_cast<std::size_t>(labels[b]));
  } else {
    if (natural_logits == nullptr)
      throw std::invalid_argument("attack_objective_value: needs natural logits");
    const Matrix s_nat = softmax_rows(*natural_logits);
    const Matrix log_nat = log_softmax_rows(*natural_logits);
    const Matrix log_adv = log_softmax_rows(logits);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < logits.cols(); ++j)
        total += s_nat(b, j) * (log_nat(b, j) - log_adv(b, j));
  }
  return total * inv_batch;
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

double clean_accuracy(const MlpModel& model, const LabeledDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("clean_accuracy: empty dataset");
  const Matrix logits = mlp_forward(model, data.inputs);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < logits.rows(); ++b)
    if (argmax_row(logits.row(b)) == static_cast<std::size_t>(data.labels[b])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double robust_accuracy(const MlpModel& model, const LabeledDataset& data,
                       const AttackConfig& config, Rng& rng) {
  if (data.size() == 0) throw std::invalid_argument("robust_accuracy: empty dataset");
  const Matrix natural_logits = mlp_forward(model, data.inputs);
  const Matrix adv = pgd_attack(model, data.inputs, data.labels, &natural_logits, config, rng,
                                data.box_lo, data.box_hi);
  const Matrix logits = mlp_forward(model, adv);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < logits.rows(); ++b)
    if (argmax_row(logits.row(b)) == static_cast<std::size_t>(data.labels[b])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace gkl
