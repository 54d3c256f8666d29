#pragma once

#include <functional>
#include <string>

#include "gkl/divergence.hpp"
#include "gkl/matrix.hpp"
#include "gkl/rng.hpp"

namespace gkl {

/// Independent oracles for the analytic gradients: central finite differences
/// of a scalar evaluator, and randomized equivalence harnesses comparing the
/// KL and decoupled routes and the two wMSE kernels.
///
/// Detached quantities must be pinned when differentiating numerically: an
/// evaluator handed to finite_diff has to hold every stop-gradient input
/// (weights, soft labels, detached pairwise differences) fixed at the base
/// point, otherwise central differences measure a different derivative than
/// the analytic one claims. The suite runners in verify.hpp construct such
/// frozen evaluators.

enum class Side { kReference, kLearner };

struct CheckReport {
  std::string name;          // loss or case being checked
  std::string side;          // "reference", "learner", "value"
  double max_abs_err = 0.0;  // worst absolute discrepancy over all entries
  double max_rel_err = 0.0;  // relative discrepancy at the worst entry
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  double tol_abs = 0.0;
  double tol_rel = 0.0;
  bool pass = false;  // every entry within tol_abs or tol_rel
};

using LossEvaluator = std::function<double(const LogitPair&)>;

/// Central differences [f(x + h e) - f(x - h e)] / (2h) over one side's
/// entries. step must lie in [1e-7, 1e-3]; the evaluator must be
/// deterministic and finite.
Matrix finite_diff(const LossEvaluator& evaluator, const LogitPair& pair, Side side, double step);

/// Entry-wise comparison. An entry passes when its absolute error is within
/// tol_abs or its relative error (against the larger magnitude) is within
/// tol_rel; the report carries the worst entry's location and both errors.
CheckReport compare_matrices(const std::string& name, const std::string& side,
                             const Matrix& candidate, const Matrix& reference, double tol_abs,
                             double tol_rel);

/// One random draw of the KL-vs-decoupled gradient identity (alpha = beta =
/// gamma = 1, sample-wise weights, asymmetry kept): reports the worst
/// discrepancy across whichever sides carry gradients. Tolerance 1e-10.
CheckReport equivalence_trial(Rng& rng, std::size_t batch, std::size_t classes,
                              bool detach_reference = false);

/// One random draw comparing wmse_naive and wmse_efficient in value and both
/// gradients at the given smoothing exponent. Tolerance 1e-9.
CheckReport kernel_equivalence_trial(Rng& rng, std::size_t batch, std::size_t classes,
                                     double gamma);

/// Uniform random logits in [-5, 5].
Matrix random_logits(Rng& rng, std::size_t batch, std::size_t classes);

}  // namespace gkl
