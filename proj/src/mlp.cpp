#include "gkl/mlp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gkl {

MlpModel::MlpModel(std::vector<std::size_t> layer_sizes, Rng& rng)
    : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2)
    throw std::invalid_argument("MlpModel: need at least input and output sizes");
  for (std::size_t s : layer_sizes_)
    if (s == 0) throw std::invalid_argument("MlpModel: zero layer size");
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const std::size_t fan_in = layer_sizes_[l];
    const std::size_t fan_out = layer_sizes_[l + 1];
    Matrix w(fan_in, fan_out);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.flat()) v = scale * rng.normal();
    weights_.push_back(std::move(w));
    biases_.emplace_back(fan_out, 0.0);
  }
}

MlpModel MlpModel::zeros(std::vector<std::size_t> layer_sizes) {
  MlpModel m;
  m.layer_sizes_ = std::move(layer_sizes);
  if (m.layer_sizes_.size() < 2)
    throw std::invalid_argument("MlpModel: need at least input and output sizes");
  for (std::size_t l = 0; l + 1 < m.layer_sizes_.size(); ++l) {
    m.weights_.emplace_back(m.layer_sizes_[l], m.layer_sizes_[l + 1]);
    m.biases_.emplace_back(m.layer_sizes_[l + 1], 0.0);
  }
  return m;
}

std::vector<double> MlpModel::flatten() const {
  std::vector<double> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto w = weights_[l].flat();
    out.insert(out.end(), w.begin(), w.end());
    out.insert(out.end(), biases_[l].begin(), biases_[l].end());
  }
  return out;
}

void MlpModel::unflatten(std::span<const double> params) {
  std::size_t pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto w = weights_[l].flat();
    if (pos + w.size() + biases_[l].size() > params.size())
      throw std::invalid_argument("MlpModel::unflatten: parameter vector too short");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = params[pos++];
    for (double& b : biases_[l]) b = params[pos++];
  }
  if (pos != params.size())
    throw std::invalid_argument("MlpModel::unflatten: parameter vector too long");
}

Matrix mlp_forward(const MlpModel& model, const Matrix& inputs, ForwardCache* cache) {
  if (inputs.cols() != model.input_dim())
    throw std::invalid_argument("mlp_forward: input dim " + std::to_string(inputs.cols()) +
                                " does not match model dim " +
                                std::to_string(model.input_dim()));
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(inputs);
  }
  Matrix current = inputs;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const Matrix& w = model.weight(l);
    const std::vector<double>& b = model.bias(l);
    Matrix next(current.rows(), w.cols());
    for (std::size_t r = 0; r < current.rows(); ++r) {
      for (std::size_t c = 0; c < w.cols(); ++c) {
        double acc = b[c];
        for (std::size_t k = 0; k < w.rows(); ++k) acc += current(r, k) * w(k, c);
        next(r, c) = acc;
      }
    }
    const bool hidden = l + 1 < model.num_layers();
    if (hidden) {
      for (double& v : next.flat())
        if (v < 0.0) v = 0.0;
    }
    if (cache) cache->activations.push_back(next);
    current = std::move(next);
  }
  return current;
}

MlpGradients mlp_backward(const MlpModel& model, const ForwardCache& cache,
                          const Matrix& grad_logits, bool want_input_grads) {
  const std::size_t layers = model.num_layers();
  if (cache.activations.size() != layers + 1)
    throw std::invalid_argument("mlp_backward: cache does not match model (stale cache?)");
  for (std::size_t l = 0; l < layers; ++l) {
    if (cache.activations[l].cols() != model.weight(l).rows())
      throw std::invalid_argument("mlp_backward: cache does not match model (stale cache?)");
  }
  if (!grad_logits.same_shape(cache.activations.back()))
    throw std::invalid_argument("mlp_backward: grad_logits shape mismatch");

  MlpGradients grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);

  Matrix delta = grad_logits;  // gradient w.r.t. the current layer's output
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& below = cache.activations[l];
    const Matrix& w = model.weight(l);

    Matrix wg(w.rows(), w.cols());
    for (std::size_t k = 0; k < w.rows(); ++k)
      for (std::size_t c = 0; c < w.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < below.rows(); ++r) acc += below(r, k) * delta(r, c);
        wg(k, c) = acc;
      }
    grads.weights[l] = std::move(wg);

    std::vector<double> bg(w.cols(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c) bg[c] += delta(r, c);
    grads.biases[l] = std::move(bg);

    if (l == 0 && !want_input_grads) break;
    Matrix next_delta(below.rows(), below.cols());
    for (std::size_t r = 0; r < below.rows(); ++r)
      for (std::size_t k = 0; k < below.cols(); ++k) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) acc += delta(r, c) * w(k, c);
        next_delta(r, k) = acc;
      }
    if (l > 0) {
      // below is post-ReLU: zero activation means the unit was clamped.
      for (std::size_t i = 0; i < next_delta.size(); ++i)
        if (below.flat()[i] <= 0.0) next_delta.flat()[i] = 0.0;
    }
    if (l == 0) {
      grads.inputs = std::move(next_delta);
    } else {
      delta = std::move(next_delta);
    }
  }
  return grads;
}

SgdOptimizer::SgdOptimizer(const MlpModel& model, SgdConfig config) : config_(config) {
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    weight_velocity_.emplace_back(model.weight(l).rows(), model.weight(l).cols());
    bias_velocity_.emplace_back(model.bias(l).size(), 0.0);
  }
}

double SgdOptimizer::learning_rate_at(std::size_t step) const {
  if (config_.schedule == LrSchedule::kConstant) return config_.learning_rate;
  const double progress =
      static_cast<double>(step) / static_cast<double>(config_.total_steps);
  return config_.learning_rate * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

void SgdOptimizer::step(MlpModel& model, const MlpGradients& grads, std::size_t step_index) {
  if (grads.weights.size() != weight_velocity_.size())
    throw std::invalid_argument("SgdOptimizer::step: gradient layer count mismatch");
  const double lr = learning_rate_at(step_index);
  for (std::size_t l = 0; l < weight_velocity_.size(); ++l) {
    Matrix& w = model.weight(l);
    Matrix& v = weight_velocity_[l];
    const Matrix& g = grads.weights[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v.flat()[i] = config_.momentum * v.flat()[i] + g.flat()[i] +
                    config_.weight_decay * w.flat()[i];
      w.flat()[i] -= lr * v.flat()[i];
    }
    std::vector<double>& b = model.bias(l);
    std::vector<double>& bv = bias_velocity_[l];
    const std::vector<double>& bg = grads.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) {
      bv[i] = config_.momentum * bv[i] + bg[i] + config_.weight_decay * b[i];
      b[i] -= lr * bv[i];
    }
  }
}

}  // namespace gkl
