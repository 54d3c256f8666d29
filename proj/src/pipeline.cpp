#include "gkl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gkl/softmax.hpp"

namespace gkl {

namespace {

using Clock = std::chrono::steady_clock;

// Per-purpose random streams derived from the config seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamAttack = 3;
constexpr std::uint64_t kStreamEval = 4;

struct Batch {
  Matrix inputs;
  std::vector<int> labels;
};

Batch gather(const LabeledDataset& data, std::span<const std::size_t> indices) {
  Batch batch;
  batch.inputs = Matrix(indices.size(), data.inputs.cols());
  batch.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = data.inputs.row(indices[i]);
    auto dst = batch.inputs.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
    batch.labels[i] = data.labels[indices[i]];
  }
  return batch;
}

/// Mean CE against hard labels plus its logit gradient, scaled by weight.
double add_hard_ce(const Matrix& logits, std::span<const int> labels, double weight,
                   Matrix& grad_logits) {
  const std::size_t batch = logits.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const Matrix probs = softmax_rows(logits);
  const Matrix log_probs = log_softmax_rows(logits);
  double value = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    value -= log_probs(b, static_cast<std::size_t>(labels[b]));
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      const double onehot = j == static_cast<std::size_t>(labels[b]) ? 1.0 : 0.0;
      grad_logits(b, j) += weight * (probs(b, j) - onehot) * inv_batch;
    }
  }
  return weight * value * inv_batch;
}

void accumulate(MlpGradients& into, const MlpGradients& from) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    for (std::size_t i = 0; i < into.weights[l].size(); ++i)
      into.weights[l].flat()[i] += from.weights[l].flat()[i];
    for (std::size_t i = 0; i < into.biases[l].size(); ++i)
      into.biases[l][i] += from.biases[l][i];
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return order;
}

void fill_eval_metrics(ExperimentResult& result, const MlpModel& model,
                       const LabeledDataset& data, std::span<const std::size_t> group_counts) {
  const std::size_t classes = model.num_classes();
  const Matrix logits = mlp_forward(model, data.inputs);
  const Matrix probs = softmax_rows(logits);

  std::vector<std::size_t> correct(classes, 0), seen(classes, 0);
  std::vector<double> score_sum(classes, 0.0);
  std::size_t total_correct = 0;
  ClassWeightTable table(classes);
  table.update(logits, data.labels, /*tau=*/1.0);
  table.commit_epoch();

  for (std::size_t b = 0; b < data.size(); ++b) {
    const auto y = static_cast<std::size_t>(data.labels[b]);
    ++seen[y];
    score_sum[y] += probs(b, y);
    if (argmax_row(logits.row(b)) == y) {
      ++correct[y];
      ++total_correct;
    }
  }
  result.clean_accuracy = static_cast<double>(total_correct) / static_cast<double>(data.size());
  result.per_class_accuracy.assign(classes, 0.0);
  result.per_class_true_score.assign(classes, 0.0);
  result.per_class_margin.assign(classes, 0.0);
  for (std::size_t y = 0; y < classes; ++y) {
    result.per_class_accuracy[y] =
        seen[y] ? static_cast<double>(correct[y]) / static_cast<double>(seen[y]) : 0.0;
    result.per_class_true_score[y] = seen[y] ? score_sum[y] / static_cast<double>(seen[y]) : 0.0;
    result.per_class_margin[y] = table.margin(y);
  }

  const std::vector<std::size_t> own_counts = data.class_counts();
  result.groups = split_by_frequency(group_counts.empty() ? own_counts : group_counts);
  const auto group_accuracy = [&](const std::vector<std::size_t>& members) -> std::optional<double> {
    if (members.empty()) return std::nullopt;
    double sum = 0.0;
    for (std::size_t y : members) sum += result.per_class_accuracy[y];
    return sum / static_cast<double>(members.size());
  };
  result.many_accuracy = group_accuracy(result.groups.many);
  result.medium_accuracy = group_accuracy(result.groups.medium);
  result.few_accuracy = group_accuracy(result.groups.few);
}

}  // namespace

GroupSplit split_by_frequency(std::span<const std::size_t> class_counts) {
  const std::size_t classes = class_counts.size();
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return class_counts[a] > class_counts[b];
  });
  const auto group_size = static_cast<std::size_t>(
      std::llround(0.3 * static_cast<double>(classes)));
  GroupSplit split;
  for (std::size_t i = 0; i < classes; ++i) {
    if (i < group_size)
      split.many.push_back(order[i]);
    else if (i >= classes - group_size && classes >= 2 * group_size)
      split.few.push_back(order[i]);
    else
      split.medium.push_back(order[i]);
  }
  return split;
}

LossResult divergence_loss(LossKind kind, const LogitPair& pair, const LossConfig& config,
                           const ClassWeightTable* table, std::span<const int> labels) {
  switch (kind) {
    case LossKind::kDkl:
      return dkl_loss(pair, config);
    case LossKind::kGkl:
      return gkl_loss(pair, config, table, labels);
    case LossKind::kKl:
    case LossKind::kJsd: {
      const double t = config.kd_temperature;
      if (t == 1.0) return kind == LossKind::kKl ? kl_loss(pair) : jsd_loss(pair);
      LogitPair scaled = pair;
      for (double& v : scaled.reference.flat()) v /= t;
      for (double& v : scaled.learner.flat()) v /= t;
      LossResult res = kind == LossKind::kKl ? kl_loss(scaled) : jsd_loss(scaled);
      res.value *= t * t;
      if (res.grad_reference)
        for (double& v : res.grad_reference->flat()) v *= t;
      if (res.grad_learner)
        for (double& v : res.grad_learner->flat()) v *= t;
      return res;
    }
    case LossKind::kHardCe:
      break;
  }
  throw std::invalid_argument("divergence_loss: kHardCe has no divergence term");
}

MlpModel train_classifier(const std::vector<std::size_t>& layers, const LabeledDataset& train,
                          const TrainConfig& config) {
  Rng init_rng(config.seed, kStreamInit);
  Rng shuffle_rng(config.seed, kStreamShuffle);
  MlpModel model(layers, init_rng);
  if (model.num_classes() != train.num_classes)
    throw std::invalid_argument("train_classifier: model/data class-count mismatch");

  const std::size_t batches_per_epoch =
      (train.size() + config.batch_size - 1) / config.batch_size;
  SgdConfig sgd{config.learning_rate, config.momentum, config.weight_decay, config.schedule,
                config.epochs * batches_per_epoch};
  SgdOptimizer optimizer(model, sgd);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      const Batch batch = gather(train, std::span(order).subspan(begin, count));
      ForwardCache cache;
      const Matrix logits = mlp_forward(model, batch.inputs, &cache);
      Matrix grad_logits(logits.rows(), logits.cols());
      add_hard_ce(logits, batch.labels, 1.0, grad_logits);
      optimizer.step(model, mlp_backward(model, cache, grad_logits), step++);
    }
  }
  return model;
}

ExperimentResult distill(const MlpModel& teacher, const std::vector<std::size_t>& student_layers,
                         const LabeledDataset& train, const LabeledDataset& test,
                         const TrainConfig& config, MlpModel* student_out,
                         ClassWeightTable* table_out) {
  const auto start = Clock::now();
  if (teacher.num_classes() != train.num_classes)
    throw std::invalid_argument("distill: teacher/data class-count mismatch");
  if (student_layers.back() != teacher.num_classes())
    throw std::invalid_argument("distill: teacher/student class-count mismatch");

  Rng init_rng(config.seed, kStreamInit);
  Rng shuffle_rng(config.seed, kStreamShuffle);
  MlpModel student(student_layers, init_rng);
  ClassWeightTable table(train.num_classes);

  const std::size_t batches_per_epoch =
      (train.size() + config.batch_size - 1) / config.batch_size;
  SgdConfig sgd{config.learning_rate, config.momentum, config.weight_decay, config.schedule,
                config.epochs * batches_per_epoch};
  SgdOptimizer optimizer(student, sgd);

  ExperimentResult result;
  result.seed = config.seed;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      const Batch batch = gather(train, std::span(order).subspan(begin, count));

      const Matrix teacher_logits = mlp_forward(teacher, batch.inputs);
      ForwardCache cache;
      const Matrix student_logits = mlp_forward(student, batch.inputs, &cache);

      Matrix grad_logits(student_logits.rows(), student_logits.cols());
      double batch_loss = 0.0;
      if (config.hard_label_weight != 0.0)
        batch_loss +=
            add_hard_ce(student_logits, batch.labels, config.hard_label_weight, grad_logits);
      if (config.loss != LossKind::kHardCe && config.divergence_weight != 0.0) {
        LogitPair pair;
        pair.reference = teacher_logits;
        pair.learner = student_logits;
        pair.detach_reference = true;  // the teacher is frozen
        const LossResult div =
            divergence_loss(config.loss, pair, config.loss_config, &table, batch.labels);
        batch_loss += config.divergence_weight * div.value;
        for (std::size_t i = 0; i < grad_logits.size(); ++i)
          grad_logits.flat()[i] += config.divergence_weight * div.grad_learner->flat()[i];
      }
      table.update(teacher_logits, batch.labels, config.loss_config.tau);
      epoch_loss += batch_loss * static_cast<double>(count);
      optimizer.step(student, mlp_backward(student, cache, grad_logits), step++);
    }
    table.commit_epoch();
    result.epoch_train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    result.epoch_clean_acc.push_back(clean_accuracy(student, test));
  }

  fill_eval_metrics(result, student, test, train.class_counts());
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (student_out) *student_out = student;
  if (table_out) *table_out = table;
  return result;
}

ExperimentResult adversarial_train(const std::vector<std::size_t>& layers,
                                   const LabeledDataset& train, const LabeledDataset& test,
                                   const TrainConfig& config, const AttackConfig& train_attack,
                                   const AttackConfig& eval_attack, MlpModel* model_out,
                                   ClassWeightTable* table_out) {
  const auto start = Clock::now();
  Rng init_rng(config.seed, kStreamInit);
  Rng shuffle_rng(config.seed, kStreamShuffle);
  Rng attack_rng(config.seed, kStreamAttack);
  MlpModel model(layers, init_rng);
  if (model.num_classes() != train.num_classes)
    throw std::invalid_argument("adversarial_train: model/data class-count mismatch");
  ClassWeightTable table(train.num_classes);

  const std::size_t batches_per_epoch =
      (train.size() + config.batch_size - 1) / config.batch_size;
  SgdConfig sgd{config.learning_rate, config.momentum, config.weight_decay, config.schedule,
                config.epochs * batches_per_epoch};
  SgdOptimizer optimizer(model, sgd);

  ExperimentResult result;
  result.seed = config.seed;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(train.size(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      const Batch batch = gather(train, std::span(order).subspan(begin, count));

      ForwardCache natural_cache;
      const Matrix natural_logits = mlp_forward(model, batch.inputs, &natural_cache);
      const Matrix adv_inputs = pgd_attack(model, batch.inputs, batch.labels, &natural_logits,
                                           train_attack, attack_rng, train.box_lo, train.box_hi);
      ForwardCache adv_cache;
      const Matrix adv_logits = mlp_forward(model, adv_inputs, &adv_cache);

      Matrix grad_natural(natural_logits.rows(), natural_logits.cols());
      Matrix grad_adv(adv_logits.rows(), adv_logits.cols());
      double batch_loss =
          add_hard_ce(natural_logits, batch.labels, config.hard_label_weight, grad_natural);

      if (config.divergence_weight != 0.0) {
        LogitPair pair;
        pair.reference = natural_logits;
        pair.learner = adv_logits;
        const LossResult div =
            divergence_loss(config.loss, pair, config.loss_config, &table, batch.labels);
        batch_loss += config.divergence_weight * div.value;
        for (std::size_t i = 0; i < grad_natural.size(); ++i) {
          grad_natural.flat()[i] += config.divergence_weight * div.grad_reference->flat()[i];
          grad_adv.flat()[i] += config.divergence_weight * div.grad_learner->flat()[i];
        }
      }
      table.update(natural_logits, batch.labels, config.loss_config.tau);
      epoch_loss += batch_loss * static_cast<double>(count);

      MlpGradients grads = mlp_backward(model, natural_cache, grad_natural);
      accumulate(grads, mlp_backward(model, adv_cache, grad_adv));
      optimizer.step(model, grads, step++);
    }
    table.commit_epoch();
    result.epoch_train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    result.epoch_clean_acc.push_back(clean_accuracy(model, test));
  }

  fill_eval_metrics(result, model, test, train.class_counts());
  Rng eval_rng(config.seed, kStreamEval);
  result.robust_accuracy = robust_accuracy(model, test, eval_attack, eval_rng);
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (model_out) *model_out = model;
  if (table_out) *table_out = table;
  return result;
}

ExperimentResult evaluate(const MlpModel& model, const LabeledDataset& data,
                          const AttackConfig* attack, Rng& rng,
                          std::span<const std::size_t> group_counts) {
  ExperimentResult result;
  const auto start = Clock::now();
  fill_eval_metrics(result, model, data, group_counts);
  if (attack) result.robust_accuracy = robust_accuracy(model, data, *attack, rng);
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

}  // namespace gkl
