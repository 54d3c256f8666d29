#include "gkl/divergence.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gkl/softmax.hpp"

namespace gkl {

namespace {

void validate_pair(const LogitPair& pair, const char* op) {
  if (!pair.reference.same_shape(pair.learner))
    throw std::invalid_argument(std::string(op) + ": logit shapes differ");
  if (pair.reference.rows() < 1)
    throw std::invalid_argument(std::string(op) + ": empty batch");
  if (pair.reference.cols() < 2)
    throw std::invalid_argument(std::string(op) + ": need at least two classes");
  std::size_t bad = first_non_finite(pair.reference.flat());
  if (bad != static_cast<std::size_t>(-1))
    throw std::invalid_argument(std::string(op) + ": non-finite reference logit at flat index " +
                                std::to_string(bad));
  bad = first_non_finite(pair.learner.flat());
  if (bad != static_cast<std::size_t>(-1))
    throw std::invalid_argument(std::string(op) + ": non-finite learner logit at flat index " +
                                std::to_string(bad));
}

void validate_weights(const LogitPair& pair, const WeightTensor& weights, const char* op) {
  if (!weights.coeff.same_shape(pair.reference))
    throw std::invalid_argument(std::string(op) + ": weight shape differs from logits");
  for (double c : weights.coeff.flat())
    if (!(c >= 0.0 && c <= 1.0))
      throw std::invalid_argument(std::string(op) + ": weight coefficient outside [0, 1]");
  if (!(weights.normalizer > 0.0))
    throw std::invalid_argument(std::string(op) + ": weight normalizer must be positive");
}

LogitPair scale_logits(const LogitPair& pair, double t) {
  LogitPair scaled = pair;
  for (double& v : scaled.reference.flat()) v /= t;
  for (double& v : scaled.learner.flat()) v /= t;
  return scaled;
}

}  // namespace

WeightTensor WeightTensor::from_probabilities(const Matrix& probs, double gamma) {
  WeightTensor w;
  w.coeff = Matrix(probs.rows(), probs.cols());
  for (std::size_t b = 0; b < probs.rows(); ++b) {
    const auto src = probs.row(b);
    auto dst = w.coeff.row(b);
    if (gamma == 0.0) {
      for (std::size_t j = 0; j < probs.cols(); ++j) dst[j] = 1.0;
    } else if (gamma == 1.0) {
      for (std::size_t j = 0; j < probs.cols(); ++j) dst[j] = src[j];
    } else {
      for (std::size_t j = 0; j < probs.cols(); ++j) dst[j] = std::pow(src[j], gamma);
    }
  }
  double norm = 0.0;
  for (std::size_t b = 0; b < probs.rows(); ++b) {
    double row_sum = 0.0;
    for (double c : w.coeff.row(b)) row_sum += c;
    norm += row_sum * row_sum;
  }
  w.normalizer = norm;
  return w;
}

WeightTensor WeightTensor::from_class_table(const ClassWeightTable& table,
                                            std::span<const int> labels, double gamma) {
  WeightTensor w;
  w.coeff = Matrix(labels.size(), table.num_classes());
  double norm = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0)
      throw std::invalid_argument("WeightTensor::from_class_table: negative label");
    const std::vector<double> c = table.weight_vector(static_cast<std::size_t>(labels[b]), gamma);
    auto dst = w.coeff.row(b);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      dst[j] = c[j];
      row_sum += c[j];
    }
    norm += row_sum * row_sum;
  }
  w.normalizer = norm;
  return w;
}

MixtureState MixtureState::from_pair(const LogitPair& pair) {
  validate_pair(pair, "MixtureState");
  const Matrix s_ref = softmax_rows(pair.reference);
  const Matrix s_lrn = softmax_rows(pair.learner);
  MixtureState state;
  state.mixture = Matrix(s_ref.rows(), s_ref.cols());
  state.virtual_logits = Matrix(s_ref.rows(), s_ref.cols());
  for (std::size_t i = 0; i < s_ref.size(); ++i) {
    const double m = 0.5 * s_ref.flat()[i] + 0.5 * s_lrn.flat()[i];
    state.mixture.flat()[i] = m;
    state.virtual_logits.flat()[i] = safe_log(m);
  }
  return state;
}

LossResult kl_loss(const LogitPair& pair) {
  validate_pair(pair, "kl_loss");
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  const Matrix s_ref = softmax_rows(pair.reference);
  const Matrix log_ref = log_softmax_rows(pair.reference);
  const Matrix s_lrn = softmax_rows(pair.learner);
  const Matrix log_lrn = log_softmax_rows(pair.learner);

  LossResult out;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double sample = 0.0;
    for (std::size_t j = 0; j < classes; ++j)
      sample += s_ref(b, j) * (log_ref(b, j) - log_lrn(b, j));
    total += sample;
  }
  out.value = total * inv_batch;

  if (!pair.detach_learner) {
    Matrix g(batch, classes);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < classes; ++j)
        g(b, j) = (s_lrn(b, j) - s_ref(b, j)) * inv_batch;
    out.grad_learner = std::move(g);
  }
  if (!pair.detach_reference) {
    // Pairwise form of the reference-side derivative: every class pair (j, k)
    // contributes its logit-difference gap weighted by s_ref[k] * s_ref[j].
    Matrix g(batch, classes);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto ref = pair.reference.row(b);
      const auto lrn = pair.learner.row(b);
      const auto s = s_ref.row(b);
      for (std::size_t j = 0; j < classes; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
          const double gap = (ref[j] - ref[k]) - (lrn[j] - lrn[k]);
          acc += gap * (s[k] * s[j]);
        }
        g(b, j) = acc * inv_batch;
      }
    }
    out.grad_reference = std::move(g);
  }
  return out;
}

LossResult soft_cross_entropy(const LogitPair& pair) {
  validate_pair(pair, "soft_cross_entropy");
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  const Matrix s_ref = softmax_rows(pair.reference);
  const Matrix log_lrn = log_softmax_rows(pair.learner);

  LossResult out;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double sample = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sample -= s_ref(b, j) * log_lrn(b, j);
    total += sample;
  }
  out.value = total * inv_batch;

  // Soft labels are detached by definition; no reference gradient ever.
  if (!pair.detach_learner) {
    const Matrix s_lrn = softmax_rows(pair.learner);
    Matrix g(batch, classes);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < classes; ++j)
        g(b, j) = (s_lrn(b, j) - s_ref(b, j)) * inv_batch;
    out.grad_learner = std::move(g);
  }
  return out;
}

LossResult wmse_naive(const LogitPair& pair, const WeightTensor& weights, bool break_asymmetry) {
  validate_pair(pair, "wmse_naive");
  validate_weights(pair, weights, "wmse_naive");
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
  const double inv_norm = 1.0 / weights.normalizer;

  LossResult out;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto ref = pair.reference.row(b);
    const auto lrn = pair.learner.row(b);
    const auto c = weights.coeff.row(b);
    for (std::size_t j = 0; j < classes; ++j) {
      for (std::size_t k = 0; k < classes; ++k) {
        const double gap = (ref[j] - ref[k]) - (lrn[j] - lrn[k]);
        total += (c[j] * c[k]) * (gap * gap);
      }
    }
  }
  out.value = 0.25 * total * inv_norm;

  const bool want_ref = !pair.detach_reference;
  const bool want_lrn = !pair.detach_learner;
  if (want_ref || want_lrn) {
    Matrix g(batch, classes);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto ref = pair.reference.row(b);
      const auto lrn = pair.learner.row(b);
      const auto c = weights.coeff.row(b);
      for (std::size_t i = 0; i < classes; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
          const double gap = (ref[i] - ref[j]) - (lrn[i] - lrn[j]);
          acc += (c[i] * c[j]) * gap;
        }
        g(b, i) = acc * inv_norm;
      }
    }
    if (want_lrn) {
      Matrix gl(batch, classes);
      if (break_asymmetry) {
        for (std::size_t i = 0; i < gl.size(); ++i) gl.flat()[i] = -g.flat()[i];
      }
      // Without break_asymmetry the learner's differences are detached and the
      // learner gradient is exactly zero.
      out.grad_learner = std::move(gl);
    }
    if (want_ref) out.grad_reference = std::move(g);
  }
  return out;
}

LossResult wmse_efficient(const LogitPair& pair, const WeightTensor& weights,
                          bool break_asymmetry) {
  validate_pair(pair, "wmse_efficient");
  validate_weights(pair, weights, "wmse_efficient");
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
  const double inv_norm = 1.0 / weights.normalizer;

  const bool want_ref = !pair.detach_reference;
  const bool want_lrn = !pair.detach_learner;

  LossResult out;
  Matrix grad_ref;
  Matrix grad_lrn;
  if (want_ref) grad_ref = Matrix(batch, classes);
  if (want_lrn) grad_lrn = Matrix(batch, classes);

  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto ref = pair.reference.row(b);
    const auto lrn = pair.learner.row(b);
    const auto c = weights.coeff.row(b);
    // One pass of per-sample scalars; no C x C intermediate.
    double sum_c = 0.0, sum_cd = 0.0, sum_cdd = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double d = ref[j] - lrn[j];
      sum_c += c[j];
      sum_cd += c[j] * d;
      sum_cdd += c[j] * (d * d);
    }
    total += 2.0 * sum_c * sum_cdd - 2.0 * (sum_cd * sum_cd);
    if (want_ref || want_lrn) {
      for (std::size_t i = 0; i < classes; ++i) {
        const double d = ref[i] - lrn[i];
        const double g = c[i] * (sum_c * d - sum_cd) * inv_norm;
        if (want_ref) grad_ref(b, i) = g;
        if (want_lrn) grad_lrn(b, i) = break_asymmetry ? -g : 0.0;
      }
    }
  }
  out.value = 0.25 * total * inv_norm;
  if (want_ref) out.grad_reference = std::move(grad_ref);
  if (want_lrn) out.grad_learner = std::move(grad_lrn);
  return out;
}

std::size_t wmse_efficient_workspace_bytes(std::size_t batch, std::size_t classes) {
  // Row spans plus three running scalars per sample; the kernel materializes
  // nothing of size C x C. Stated as bytes of transient doubles for the
  // structural memory assertion.
  (void)batch;
  (void)classes;
  return 3 * sizeof(double);
}

namespace {

/// Shared core of dkl_loss / gkl_loss: alpha * wMSE(weights) + beta * CE on
/// temperature-scaled logits, chain rule applied for the t^2 loss scale.
LossResult decoupled_core(const LogitPair& pair, const LossConfig& config,
                          const WeightTensor& weights, bool break_asymmetry) {
  const double t = config.kd_temperature;
  if (!(t > 0.0)) throw std::invalid_argument("decoupled loss: kd_temperature must be positive");
  const LogitPair scaled = (t == 1.0) ? pair : scale_logits(pair, t);

  const LossResult wm = wmse_efficient(scaled, weights, break_asymmetry);
  const LossResult ce = soft_cross_entropy(scaled);

  LossResult out;
  out.value = config.alpha * wm.value + config.beta * ce.value;
  if (!pair.detach_reference) {
    // Cross-entropy's soft labels are detached, so only wMSE reaches this side.
    Matrix g = *wm.grad_reference;
    for (double& v : g.flat()) v *= config.alpha;
    out.grad_reference = std::move(g);
  }
  if (!pair.detach_learner) {
    Matrix g(pair.learner.rows(), pair.learner.cols());
    const Matrix& gw = *wm.grad_learner;
    const Matrix& gc = *ce.grad_learner;
    for (std::size_t i = 0; i < g.size(); ++i)
      g.flat()[i] = config.alpha * gw.flat()[i] + config.beta * gc.flat()[i];
    out.grad_learner = std::move(g);
  }
  if (t != 1.0) {
    out.value *= t * t;
    if (out.grad_reference)
      for (double& v : out.grad_reference->flat()) v *= t;
    if (out.grad_learner)
      for (double& v : out.grad_learner->flat()) v *= t;
  }
  return out;
}

}  // namespace

LossResult dkl_loss(const LogitPair& pair, const LossConfig& config) {
  validate_pair(pair, "dkl_loss");
  if (config.weight_mode != WeightMode::kSampleWise)
    throw std::invalid_argument("dkl_loss: only sample-wise weights; use gkl_loss for class-wise");
  const double t = config.kd_temperature;
  const Matrix probs = softmax_rows(t == 1.0 ? pair.reference : scale_logits(pair, t).reference);
  const WeightTensor weights = WeightTensor::from_probabilities(probs, config.gamma);
  return decoupled_core(pair, config, weights, config.break_asymmetry);
}

LossResult gkl_loss(const LogitPair& pair, const LossConfig& config, const ClassWeightTable* table,
                    std::span<const int> labels) {
  validate_pair(pair, "gkl_loss");
  WeightTensor weights;
  if (config.weight_mode == WeightMode::kClassWise) {
    if (table == nullptr || labels.empty())
      throw std::invalid_argument("gkl_loss: class-wise mode requires a class table and labels");
    if (labels.size() != pair.reference.rows())
      throw std::invalid_argument("gkl_loss: label count does not match batch");
    weights = WeightTensor::from_class_table(*table, labels, config.gamma);
  } else {
    const double t = config.kd_temperature;
    const Matrix probs = softmax_rows(t == 1.0 ? pair.reference : scale_logits(pair, t).reference);
    weights = WeightTensor::from_probabilities(probs, config.gamma);
  }
  // Asymmetry is always broken here: the learner branch receives the wMSE
  // gradient regardless of config.break_asymmetry.
  return decoupled_core(pair, config, weights, /*break_asymmetry=*/true);
}

LossResult jsd_loss(const LogitPair& pair) {
  validate_pair(pair, "jsd_loss");
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  const Matrix s_ref = softmax_rows(pair.reference);
  const Matrix s_lrn = softmax_rows(pair.learner);
  const Matrix log_ref = log_softmax_rows(pair.reference);
  const Matrix log_lrn = log_softmax_rows(pair.learner);
  const MixtureState mix = MixtureState::from_pair(pair);

  LossResult out;
  const bool want_ref = !pair.detach_reference;
  const bool want_lrn = !pair.detach_learner;
  Matrix grad_ref, grad_lrn;
  if (want_ref) grad_ref = Matrix(batch, classes);
  if (want_lrn) grad_lrn = Matrix(batch, classes);

  double total = 0.0;
  std::vector<double> gap(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    double sample = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double log_m = mix.virtual_logits(b, j);
      if (s_ref(b, j) > 0.0) sample += 0.5 * s_ref(b, j) * (log_ref(b, j) - log_m);
      if (s_lrn(b, j) > 0.0) sample += 0.5 * s_lrn(b, j) * (log_lrn(b, j) - log_m);
    }
    total += sample;

    // Each side's derivative contracts its own probabilities against the gap
    // between its logits and the mixture's virtual logits; the contraction
    // g_i - sum_j s_j g_j removes the arbitrary logit shift.
    if (want_lrn) {
      double mean_gap = 0.0;
      for (std::size_t j = 0; j < classes; ++j) {
        gap[j] = pair.learner(b, j) - mix.virtual_logits(b, j);
        mean_gap += s_lrn(b, j) * gap[j];
      }
      for (std::size_t i = 0; i < classes; ++i)
        grad_lrn(b, i) = 0.5 * s_lrn(b, i) * (gap[i] - mean_gap) * inv_batch;
    }
    if (want_ref) {
      double mean_gap = 0.0;
      for (std::size_t j = 0; j < classes; ++j) {
        gap[j] = pair.reference(b, j) - mix.virtual_logits(b, j);
        mean_gap += s_ref(b, j) * gap[j];
      }
      for (std::size_t i = 0; i < classes; ++i)
        grad_ref(b, i) = 0.5 * s_ref(b, i) * (gap[i] - mean_gap) * inv_batch;
    }
  }
  out.value = total * inv_batch;
  if (want_ref) out.grad_reference = std::move(grad_ref);
  if (want_lrn) out.grad_learner = std::move(grad_lrn);
  return out;
}

GklGradParts gkl_gradient_decomposition(const LogitPair& pair, const LossConfig& config,
                                        const ClassWeightTable* table,
                                        std::span<const int> labels) {
  if (pair.detach_learner)
    throw std::invalid_argument("gkl_gradient_decomposition: learner side is detached");
  // Recompute the two mechanisms separately; their sum must reconstruct
  // gkl_loss's learner gradient exactly (same kernels, same order).
  LossConfig wmse_only = config;
  wmse_only.beta = 0.0;
  LossConfig ce_only = config;
  ce_only.alpha = 0.0;

  const LossResult wm = gkl_loss(pair, wmse_only, table, labels);
  const LossResult ce = gkl_loss(pair, ce_only, table, labels);
  GklGradParts parts;
  parts.wmse_part = *wm.grad_learner;
  parts.ce_part = *ce.grad_learner;
  return parts;
}

}  // namespace gkl
