#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gkl/class_stats.hpp"
#include "gkl/matrix.hpp"

namespace gkl {

/// Forward values and hand-derived analytic gradients for the divergence
/// family: KL, soft-label cross-entropy, weighted pairwise MSE (naive and
/// memory-efficient kernels), the decoupled form DKL = wMSE + CE, its
/// generalization GKL (symmetric wMSE gradients, smoothed sample- or
/// class-wise weights), and Jensen-Shannon.
///
/// There is no autodiff anywhere: every gradient is the closed form derived in
/// docs/derivations.md, and stop-gradient placement is explicit. Quantities
/// marked detached (weights, soft labels, the learner's pairwise differences
/// when asymmetry is kept) are constants during differentiation, which is why
/// finite-difference checks must pin them at the base point (see grad_check).

enum class WeightMode { kSampleWise, kClassWise };

/// A batch of paired logit rows. `reference` holds the teacher / natural
/// branch (the first argument of the divergence), `learner` the student /
/// adversarial branch. A detach flag suppresses that side's gradient output.
struct LogitPair {
  Matrix reference;  // B x C
  Matrix learner;    // B x C
  bool detach_reference = false;
  bool detach_learner = false;
};

struct LossConfig {
  double alpha = 1.0;  // weighted-MSE scale
  double beta = 1.0;   // cross-entropy scale
  double gamma = 1.0;  // weight smoothing exponent in [0, 1]; 0 = uniform
  double tau = 1.0;    // temperature for class-statistics probabilities
  WeightMode weight_mode = WeightMode::kSampleWise;
  bool break_asymmetry = false;  // let wMSE also drive the learner branch
  double kd_temperature = 1.0;   // distillation temperature t
};

/// Scalar loss plus whichever analytic gradients the detach flags allow.
struct LossResult {
  double value = 0.0;
  std::optional<Matrix> grad_reference;
  std::optional<Matrix> grad_learner;
};

/// Per-sample weight coefficients c_b for the weighted MSE. The effective
/// pairwise weight is W_b[j][k] = c_b[j] * c_b[k] and every kernel divides by
/// the shared normalizer sum_b (sum_j c_b[j])^2. Weights are always detached.
struct WeightTensor {
  Matrix coeff;             // B x C, entries in [0, 1]
  double normalizer = 0.0;  // sum_b (sum_j coeff[b][j])^2

  /// coeff = probs^gamma row-wise (gamma = 0 gives all-ones).
  static WeightTensor from_probabilities(const Matrix& probs, double gamma);

  /// coeff row b = table.weight_vector(labels[b], gamma).
  static WeightTensor from_class_table(const ClassWeightTable& table, std::span<const int> labels,
                                       double gamma);
};

/// Per-sample equal mixture of the two probability rows and its logarithm.
/// log(mixture) is a valid logit vector for the mixture (softmax is
/// shift-invariant), which is what the Jensen-Shannon gradient contracts with.
struct MixtureState {
  Matrix mixture;         // B x C rows of (s_ref + s_lrn) / 2, each sums to 1
  Matrix virtual_logits;  // log(mixture)

  static MixtureState from_pair(const LogitPair& pair);
};

/// KL(s_ref || s_lrn), batch mean. grad_learner rows are
/// (s_lrn - s_ref) / B; grad_reference row entries are
/// sum_k (D[j][k]) * s_ref[k] * s_ref[j] / B with
/// D[j][k] = (ref[j]-ref[k]) - (lrn[j]-lrn[k]).
LossResult kl_loss(const LogitPair& pair);

/// -sum_j s_ref[j] * log s_lrn[j], batch mean, with the soft labels s_ref
/// always detached: grad_reference is never emitted.
LossResult soft_cross_entropy(const LogitPair& pair);

/// Weighted pairwise MSE, definitional O(B*C^2) kernel:
///   value = (1/4) * sum_b sum_{j,k} W_b[j][k] * D_b[j][k]^2 / normalizer.
/// grad_reference[b][i] = sum_j W_b[i][j] * D_b[i][j] / normalizer.
/// With break_asymmetry the learner's differences also carry gradient and
/// grad_learner is the negated pattern; otherwise grad_learner is exactly
/// zero (the learner side is detached inside the definition).
LossResult wmse_naive(const LogitPair& pair, const WeightTensor& weights, bool break_asymmetry);

/// Same value and gradients as wmse_naive within 1e-9, in O(B*C) time and
/// memory, via sum_{j,k} c_j c_k (d_j - d_k)^2 = 2*(sum c)(sum c d^2) -
/// 2*(sum c d)^2 with d = reference - learner row-wise. Shares wmse_naive's
/// normalizer so the two kernels agree exactly in exact arithmetic.
LossResult wmse_efficient(const LogitPair& pair, const WeightTensor& weights, bool break_asymmetry);

/// Bound on transient working memory of wmse_efficient (excludes inputs and
/// gradient outputs, which are part of the contract). Used by the structural
/// memory assertion in the tests.
std::size_t wmse_efficient_workspace_bytes(std::size_t batch, std::size_t classes);

/// Decoupled form: alpha * wMSE + beta * CE with sample-wise weights
/// (s_ref^gamma, detached). With alpha = beta = gamma = 1 and break_asymmetry
/// off this produces exactly the KL gradients on both sides while the value
/// differs (the gradient-equivalence identity). kd_temperature t divides the
/// logits before every softmax and scales the loss by t^2 (gradients by t).
/// weight_mode must be kSampleWise here; class-wise weights belong to gkl_loss.
LossResult dkl_loss(const LogitPair& pair, const LossConfig& config);

/// Generalized form: wMSE with smoothed weights ((s^j s^k)^gamma where s is
/// the sample's own probabilities or the class-mean row for its label) and
/// symmetric wMSE gradients (asymmetry always broken), plus beta-scaled CE
/// with detached soft labels. Class-wise mode requires the table and labels.
LossResult gkl_loss(const LogitPair& pair, const LossConfig& config,
                    const ClassWeightTable* table = nullptr, std::span<const int> labels = {});

/// JSD(s_ref || s_lrn) = (KL(s_ref||m) + KL(s_lrn||m)) / 2 with the equal
/// mixture m, batch mean. Gradients are the exact derivatives (mixture not
/// detached); each side contracts its probabilities against the gap between
/// its own logits and the mixture's virtual logits. Symmetric in its inputs.
LossResult jsd_loss(const LogitPair& pair);

/// gkl_loss's learner gradient split into its two mechanisms. wmse_part +
/// ce_part reconstructs gkl_loss(...).grad_learner exactly; ce_part rows are
/// beta * (s_lrn - s_ref) / B.
struct GklGradParts {
  Matrix wmse_part;
  Matrix ce_part;
};
GklGradParts gkl_gradient_decomposition(const LogitPair& pair, const LossConfig& config,
                                        const ClassWeightTable* table = nullptr,
                                        std::span<const int> labels = {});

}  // namespace gkl
