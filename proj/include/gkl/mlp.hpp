#pragma once

#include <cstdint>
#include <vector>

#include "gkl/matrix.hpp"
#include "gkl/rng.hpp"

namespace gkl {

/// Minimal fully-connected classifier: rectified-linear hidden layers,
/// identity output (logits), exact hand-written backpropagation. No batch
/// normalization or dropout; forward/backward are deterministic so training
/// runs are bit-reproducible given (seed, config).
class MlpModel {
 public:
  MlpModel() = default;

  /// He-style initialization: weights ~ Normal(0, sqrt(2 / fan_in)) drawn from
  /// the given generator in layer-major, row-major order; biases zero.
  MlpModel(std::vector<std::size_t> layer_sizes, Rng& rng);

  static MlpModel zeros(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t input_dim() const { return layer_sizes_.front(); }
  std::size_t num_classes() const { return layer_sizes_.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  Matrix& weight(std::size_t layer) { return weights_[layer]; }
  const Matrix& weight(std::size_t layer) const { return weights_[layer]; }
  std::vector<double>& bias(std::size_t layer) { return biases_[layer]; }
  const std::vector<double>& bias(std::size_t layer) const { return biases_[layer]; }

  /// All parameters as one flat vector (weights then bias per layer); used for
  /// trajectory comparisons and checkpointing.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);

 private:
  std::vector<std::size_t> layer_sizes_;
  std::vector<Matrix> weights_;  // weight(l) is fan_in x fan_out
  std::vector<std::vector<double>> biases_;
};

/// Post-activation values per layer; activations[0] is the input batch and
/// activations[num_layers] the logits. Consumed by mlp_backward, which
/// validates the cache against the model.
struct ForwardCache {
  std::vector<Matrix> activations;
};

/// Batch forward pass. inputs is B x D with D = model.input_dim(). When cache
/// is non-null it is filled for a later backward pass.
Matrix mlp_forward(const MlpModel& model, const Matrix& inputs, ForwardCache* cache = nullptr);

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  Matrix inputs;  // populated only when requested
};

/// Exact gradients of sum(logits * grad_logits) over the cached forward pass.
/// want_input_grads additionally backpropagates to the input batch (used by
/// the attacks).
MlpGradients mlp_backward(const MlpModel& model, const ForwardCache& cache,
                          const Matrix& grad_logits, bool want_input_grads = false);

enum class LrSchedule { kConstant, kCosine };

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  LrSchedule schedule = LrSchedule::kConstant;
  std::size_t total_steps = 1;  // cosine horizon
};

/// SGD with momentum and decoupled-from-nothing weight decay folded into the
/// gradient: v = momentum * v + g + wd * p; p -= lr(step) * v.
/// Cosine schedule: lr(step) = lr0 * (1 + cos(pi * step / total_steps)) / 2.
class SgdOptimizer {
 public:
  SgdOptimizer(const MlpModel& model, SgdConfig config);

  double learning_rate_at(std::size_t step) const;
  void step(MlpModel& model, const MlpGradients& grads, std::size_t step_index);

 private:
  SgdConfig config_;
  std::vector<Matrix> weight_velocity_;
  std::vector<std::vector<double>> bias_velocity_;
};

}  // namespace gkl
