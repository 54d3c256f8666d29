#include "gkl/grad_check.hpp"

#include <cmath>
#include <stdexcept>

#include "gkl/softmax.hpp"

namespace gkl {

Matrix random_logits(Rng& rng, std::size_t batch, std::size_t classes) {
  Matrix m(batch, classes);
  for (double& v : m.flat()) v = rng.uniform(-5.0, 5.0);
  return m;
}

Matrix finite_diff(const LossEvaluator& evaluator, const LogitPair& pair, Side side, double step) {
  if (!(step >= 1e-7 && step <= 1e-3))
    throw std::invalid_argument("finite_diff: step outside [1e-7, 1e-3]");
  LogitPair work = pair;
  Matrix& target = (side == Side::kReference) ? work.reference : work.learner;
  Matrix out(target.rows(), target.cols());
  for (std::size_t b = 0; b < target.rows(); ++b) {
    for (std::size_t i = 0; i < target.cols(); ++i) {
      const double original = target(b, i);
      target(b, i) = original + step;
      const double plus = evaluator(work);
      target(b, i) = original - step;
      const double minus = evaluator(work);
      target(b, i) = original;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw std::runtime_error("finite_diff: non-finite evaluator output");
      out(b, i) = (plus - minus) / (2.0 * step);
    }
  }
  return out;
}

CheckReport compare_matrices(const std::string& name, const std::string& side,
                             const Matrix& candidate, const Matrix& reference, double tol_abs,
                             double tol_rel) {
  if (!candidate.same_shape(reference))
    throw std::invalid_argument("compare_matrices: shape mismatch");
  CheckReport report;
  report.name = name;
  report.side = side;
  report.tol_abs = tol_abs;
  report.tol_rel = tol_rel;
  report.pass = true;

  double worst_score = -1.0;
  for (std::size_t r = 0; r < candidate.rows(); ++r) {
    for (std::size_t c = 0; c < candidate.cols(); ++c) {
      const double a = candidate(r, c);
      const double b = reference(r, c);
      const double abs_err = std::fabs(a - b);
      const double denom = std::max(std::fabs(a), std::fabs(b));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      if (abs_err > report.max_abs_err) report.max_abs_err = abs_err;
      // An entry fails only when it misses both tolerances; score > 1 = fail.
      const double abs_score = tol_abs > 0.0 ? abs_err / tol_abs
                                             : (abs_err > 0.0 ? 2.0 : 0.0);
      const double rel_score = tol_rel > 0.0 ? rel_err / tol_rel : abs_score;
      const double score = std::min(abs_score, rel_score);
      if (score > worst_score) {
        worst_score = score;
        report.worst_row = r;
        report.worst_col = c;
        report.max_rel_err = rel_err;
      }
      if (score > 1.0) report.pass = false;
    }
  }
  return report;
}

CheckReport equivalence_trial(Rng& rng, std::size_t batch, std::size_t classes,
                              bool detach_reference) {
  LogitPair pair;
  pair.reference = random_logits(rng, batch, classes);
  pair.learner = random_logits(rng, batch, classes);
  pair.detach_reference = detach_reference;

  LossConfig config;  // alpha = beta = gamma = 1, sample-wise, asymmetry kept
  const LossResult kl = kl_loss(pair);
  const LossResult dkl = dkl_loss(pair, config);

  CheckReport report;
  report.name = "kl_vs_dkl B=" + std::to_string(batch) + " C=" + std::to_string(classes);
  report.tol_abs = 1e-10;
  report.tol_rel = 0.0;
  report.pass = true;
  report.side = detach_reference ? "learner" : "both";

  const auto fold = [&report](const Matrix& a, const Matrix& b) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t c = 0; c < a.cols(); ++c) {
        const double err = std::fabs(a(r, c) - b(r, c));
        if (err > report.max_abs_err) {
          report.max_abs_err = err;
          report.worst_row = r;
          report.worst_col = c;
          const double denom = std::max(std::fabs(a(r, c)), std::fabs(b(r, c)));
          report.max_rel_err = denom > 0.0 ? err / denom : 0.0;
        }
      }
    }
  };
  if (!detach_reference) fold(*kl.grad_reference, *dkl.grad_reference);
  fold(*kl.grad_learner, *dkl.grad_learner);
  report.pass = report.max_abs_err < report.tol_abs;
  return report;
}

CheckReport kernel_equivalence_trial(Rng& rng, std::size_t batch, std::size_t classes,
                                     double gamma) {
  LogitPair pair;
  pair.reference = random_logits(rng, batch, classes);
  pair.learner = random_logits(rng, batch, classes);

  const Matrix probs = softmax_rows(pair.reference);
  const WeightTensor weights = WeightTensor::from_probabilities(probs, gamma);
  const LossResult naive = wmse_naive(pair, weights, /*break_asymmetry=*/true);
  const LossResult efficient = wmse_efficient(pair, weights, /*break_asymmetry=*/true);

  CheckReport report;
  report.name = "wmse_kernels B=" + std::to_string(batch) + " C=" + std::to_string(classes) +
                " gamma=" + std::to_string(gamma);
  report.side = "value+grads";
  report.tol_abs = 1e-9;
  report.tol_rel = 0.0;
  report.max_abs_err = std::fabs(naive.value - efficient.value);
  const double ref_err = max_abs_diff(*naive.grad_reference, *efficient.grad_reference);
  const double lrn_err = max_abs_diff(*naive.grad_learner, *efficient.grad_learner);
  if (ref_err > report.max_abs_err) report.max_abs_err = ref_err;
  if (lrn_err > report.max_abs_err) report.max_abs_err = lrn_err;
  report.pass = report.max_abs_err < report.tol_abs;
  return report;
}

}  // namespace gkl
