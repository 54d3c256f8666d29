#include "gkl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>

#include "gkl/softmax.hpp"

namespace gkl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

CheckReport scalar_check(const std::string& name, double got, double want, double tol_abs) {
  CheckReport r;
  r.name = name;
  r.side = "value";
  r.max_abs_err = std::fabs(got - want);
  const double denom = std::max(std::fabs(got), std::fabs(want));
  r.max_rel_err = denom > 0.0 ? r.max_abs_err / denom : 0.0;
  r.tol_abs = tol_abs;
  r.tol_rel = 0.0;
  r.pass = r.max_abs_err <= tol_abs;
  return r;
}

void fold_worst(CheckReport& into, const CheckReport& from) {
  if (from.max_abs_err > into.max_abs_err) {
    into.max_abs_err = from.max_abs_err;
    into.max_rel_err = from.max_rel_err;
    into.worst_row = from.worst_row;
    into.worst_col = from.worst_col;
  }
  if (!from.pass) into.pass = false;
}

double frozen_cross_entropy(const Matrix& soft_labels, const Matrix& learner_logits) {
  const Matrix log_lrn = log_softmax_rows(learner_logits);
  double total = 0.0;
  for (std::size_t b = 0; b < soft_labels.rows(); ++b) {
    double sample = 0.0;
    for (std::size_t j = 0; j < soft_labels.cols(); ++j)
      sample -= soft_labels(b, j) * log_lrn(b, j);
    total += sample;
  }
  return total / static_cast<double>(soft_labels.rows());
}

/// Brute-force reference-side wMSE gradient pattern: for each entry,
/// sum_j W[i][j] * D[i][j] / normalizer with W[i][j] = c[i] * c[j].
Matrix brute_force_wmse_grad(const LogitPair& pair, const WeightTensor& weights) {
  const std::size_t batch = pair.reference.rows();
  const std::size_t classes = pair.reference.cols();
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
      g(b, i) = acc / weights.normalizer;
    }
  }
  return g;
}

ClassWeightTable random_committed_table(Rng& rng, std::size_t classes) {
  ClassWeightTable table(classes);
  const std::size_t samples = classes * 3;
  Matrix logits = random_logits(rng, samples, classes);
  std::vector<int> labels(samples);
  for (std::size_t i = 0; i < samples; ++i) labels[i] = static_cast<int>(i % classes);
  table.update(logits, labels, /*tau=*/2.0);
  table.commit_epoch();
  return table;
}

struct FdCase {
  std::string name;
  Side side;
  // Builds (analytic gradient, frozen evaluator) for one random pair.
  std::function<std::pair<Matrix, LossEvaluator>(Rng&, const LogitPair&)> build;
};

}  // namespace

SuiteReport run_theorem_equivalence_suite(const VerifyOptions& options) {
  const auto start = Clock::now();
  SuiteReport suite;
  suite.suite = "theorem_equivalence";
  const std::size_t batches[] = {1, 8};
  const std::size_t class_counts[] = {2, 10, 100};
  std::uint64_t stream = 100;
  for (std::size_t batch : batches) {
    for (std::size_t classes : class_counts) {
      Rng rng(options.seed, stream++);
      CheckReport aggregate;
      aggregate.name = "kl_vs_dkl B=" + std::to_string(batch) + " C=" + std::to_string(classes) +
                       " (" + std::to_string(options.theorem_trials) + " trials)";
      aggregate.side = "both";
      aggregate.tol_abs = 1e-10;
      aggregate.pass = true;
      for (int t = 0; t < options.theorem_trials; ++t)
        fold_worst(aggregate, equivalence_trial(rng, batch, classes));
      suite.checks.push_back(aggregate);
    }
  }
  suite.seconds = seconds_since(start);
  return suite;
}

SuiteReport run_finite_difference_suite(const VerifyOptions& options) {
  const auto start = Clock::now();
  SuiteReport suite;
  suite.suite = "finite_difference";
  const double step = 1e-5;
  const double tol_rel = 1e-4;
  const double tol_abs = 1e-7;
  const bool inject = options.inject_wrong_sign;

  std::vector<FdCase> cases;

  cases.push_back({"kl", Side::kReference,
                   [](Rng&, const LogitPair& pair) {
                     return std::pair<Matrix, LossEvaluator>(
                         *kl_loss(pair).grad_reference,
                         [](const LogitPair& p) { return kl_loss(p).value; });
                   }});
  cases.push_back({"kl", Side::kLearner,
                   [inject](Rng&, const LogitPair& pair) {
                     Matrix g = *kl_loss(pair).grad_learner;
                     if (inject)
                       for (double& v : g.flat()) v = -v;
                     return std::pair<Matrix, LossEvaluator>(
                         std::move(g), [](const LogitPair& p) { return kl_loss(p).value; });
                   }});
  cases.push_back({"soft_cross_entropy", Side::kLearner,
                   [](Rng&, const LogitPair& pair) {
                     return std::pair<Matrix, LossEvaluator>(
                         *soft_cross_entropy(pair).grad_learner,
                         [](const LogitPair& p) { return soft_cross_entropy(p).value; });
                   }});

  // Both wMSE kernels, reference side (weights frozen by construction) and
  // learner side with broken asymmetry. gamma cycles over trials.
  struct KernelPick {
    const char* name;
    LossResult (*fn)(const LogitPair&, const WeightTensor&, bool);
  };
  for (const KernelPick kernel : {KernelPick{"wmse_naive", &wmse_naive},
                                  KernelPick{"wmse_efficient", &wmse_efficient}}) {
    for (Side side : {Side::kReference, Side::kLearner}) {
      const bool ba = true;
      cases.push_back(
          {std::string(kernel.name) + "/ba_on", side,
           [kernel, side, ba](Rng& rng, const LogitPair& pair) {
             const double gammas[] = {0.0, 0.5, 1.0};
             const double gamma = gammas[rng.below(3)];
             const WeightTensor w =
                 WeightTensor::from_probabilities(softmax_rows(pair.reference), gamma);
             const LossResult res = kernel.fn(pair, w, ba);
             Matrix g = side == Side::kReference ? *res.grad_reference : *res.grad_learner;
             LossEvaluator eval = [kernel, w](const LogitPair& p) { return kernel.fn(p, w, false).value; };
             return std::pair<Matrix, LossEvaluator>(std::move(g), std::move(eval));
           }});
    }
    // Asymmetry kept: the reference side still carries the full gradient.
    cases.push_back(
        {std::string(kernel.name) + "/ba_off", Side::kReference,
         [kernel](Rng& rng, const LogitPair& pair) {
           const double gamma = rng.below(2) ? 1.0 : 0.3;
           const WeightTensor w =
               WeightTensor::from_probabilities(softmax_rows(pair.reference), gamma);
           const LossResult res = kernel.fn(pair, w, false);
           LossEvaluator eval = [kernel, w](const LogitPair& p) { return kernel.fn(p, w, false).value; };
           return std::pair<Matrix, LossEvaluator>(*res.grad_reference, std::move(eval));
         }});
  }

  // Decoupled losses: weights and soft labels pinned at the base point, the
  // learner's pairwise differences pinned too when asymmetry is kept.
  struct DecoupledPick {
    std::string name;
    double alpha, beta, gamma, temperature;
    bool ba;
    bool class_wise;
  };
  std::vector<DecoupledPick> decoupled = {
      {"dkl/ba_off", 1.0, 1.0, 1.0, 1.0, false, false},
      {"dkl/ba_on", 2.0, 0.5, 1.0, 1.0, true, false},
      {"dkl/t=2", 1.0, 1.0, 1.0, 2.0, true, false},
      {"gkl/sample g=0", 1.2, 0.8, 0.0, 1.0, true, false},
      {"gkl/sample g=0.3", 1.2, 0.8, 0.3, 1.0, true, false},
      {"gkl/sample g=1", 1.2, 0.8, 1.0, 1.0, true, false},
      {"gkl/class g=0", 1.2, 0.8, 0.0, 1.0, true, true},
      {"gkl/class g=0.3", 1.2, 0.8, 0.3, 1.0, true, true},
      {"gkl/class g=1", 1.2, 0.8, 1.0, 1.0, true, true},
  };
  for (const auto& pick : decoupled) {
    for (Side side : {Side::kReference, Side::kLearner}) {
      cases.push_back({pick.name, side, [pick, side](Rng& rng, const LogitPair& pair) {
        LossConfig config;
        config.alpha = pick.alpha;
        config.beta = pick.beta;
        config.gamma = pick.gamma;
        config.kd_temperature = pick.temperature;
        config.break_asymmetry = pick.ba;
        const double t = pick.temperature;

        LogitPair scaled_base = pair;
        for (double& v : scaled_base.reference.flat()) v /= t;
        for (double& v : scaled_base.learner.flat()) v /= t;

        std::shared_ptr<ClassWeightTable> table;
        std::vector<int> labels;
        WeightTensor weights;
        Matrix analytic;
        if (pick.class_wise) {
          config.weight_mode = WeightMode::kClassWise;
          table = std::make_shared<ClassWeightTable>(
              random_committed_table(rng, pair.reference.cols()));
          labels.resize(pair.reference.rows());
          for (std::size_t b = 0; b < labels.size(); ++b)
            labels[b] = static_cast<int>(rng.below(pair.reference.cols()));
          weights = WeightTensor::from_class_table(*table, labels, pick.gamma);
          const LossResult res = gkl_loss(pair, config, table.get(), labels);
          analytic = side == Side::kReference ? *res.grad_reference : *res.grad_learner;
        } else {
          weights = WeightTensor::from_probabilities(softmax_rows(scaled_base.reference),
                                                     pick.gamma);
          const LossResult res = pick.name.rfind("gkl", 0) == 0
                                     ? gkl_loss(pair, config)
                                     : dkl_loss(pair, config);
          analytic = side == Side::kReference ? *res.grad_reference : *res.grad_learner;
        }

        const Matrix soft_labels = softmax_rows(scaled_base.reference);
        const Matrix base_ref_scaled = scaled_base.reference;
        const Matrix base_lrn_scaled = scaled_base.learner;
        const double alpha = pick.alpha;
        const double beta = pick.beta;
        const bool learner_in_wmse = pick.ba || side == Side::kReference;

        LossEvaluator eval = [=](const LogitPair& p) {
          LogitPair scaled = p;
          for (double& v : scaled.reference.flat()) v /= t;
          for (double& v : scaled.learner.flat()) v /= t;
          LogitPair wmse_pair;
          wmse_pair.reference = scaled.reference;
          wmse_pair.learner = learner_in_wmse ? scaled.learner : base_lrn_scaled;
          wmse_pair.detach_reference = true;
          wmse_pair.detach_learner = true;
          const double wmse = wmse_efficient(wmse_pair, weights, false).value;
          const double ce = frozen_cross_entropy(soft_labels, scaled.learner);
          return t * t * (alpha * wmse + beta * ce);
        };
        return std::pair<Matrix, LossEvaluator>(std::move(analytic), std::move(eval));
      }});
    }
  }

  cases.push_back({"jsd", Side::kReference,
                   [](Rng&, const LogitPair& pair) {
                     return std::pair<Matrix, LossEvaluator>(
                         *jsd_loss(pair).grad_reference,
                         [](const LogitPair& p) { return jsd_loss(p).value; });
                   }});
  cases.push_back({"jsd", Side::kLearner,
                   [](Rng&, const LogitPair& pair) {
                     return std::pair<Matrix, LossEvaluator>(
                         *jsd_loss(pair).grad_learner,
                         [](const LogitPair& p) { return jsd_loss(p).value; });
                   }});

  std::uint64_t stream = 200;
  for (const auto& fd_case : cases) {
    Rng rng(options.seed, stream++);
    CheckReport aggregate;
    aggregate.name = fd_case.name;
    aggregate.side = fd_case.side == Side::kReference ? "reference" : "learner";
    aggregate.tol_abs = tol_abs;
    aggregate.tol_rel = tol_rel;
    aggregate.pass = true;
    for (int trial = 0; trial < options.fd_trials; ++trial) {
      const std::size_t batch = trial % 2 ? 4 : 1;
      const std::size_t classes = std::size_t{2} + (trial % 3) * 3;  // 2, 5, 8
      LogitPair pair;
      pair.reference = random_logits(rng, batch, classes);
      pair.learner = random_logits(rng, batch, classes);
      auto [analytic, evaluator] = fd_case.build(rng, pair);
      const Matrix numeric = finite_diff(evaluator, pair, fd_case.side, step);
      fold_worst(aggregate,
                 compare_matrices(fd_case.name, aggregate.side, analytic, numeric, tol_abs, tol_rel));
    }
    suite.checks.push_back(aggregate);
  }

  // Learner gradient with asymmetry kept is exactly zero by construction.
  {
    Rng rng(options.seed, stream++);
    CheckReport aggregate;
    aggregate.name = "wmse/ba_off zero learner grad";
    aggregate.side = "learner";
    aggregate.tol_abs = 0.0;
    aggregate.pass = true;
    for (int trial = 0; trial < options.fd_trials; ++trial) {
      LogitPair pair;
      pair.reference = random_logits(rng, 3, 6);
      pair.learner = random_logits(rng, 3, 6);
      const WeightTensor w =
          WeightTensor::from_probabilities(softmax_rows(pair.reference), 1.0);
      for (const LossResult res :
           {wmse_naive(pair, w, false), wmse_efficient(pair, w, false)}) {
        const Matrix zeros(3, 6, 0.0);
        fold_worst(aggregate, compare_matrices(aggregate.name, "learner", *res.grad_learner,
                                               zeros, 0.0, 0.0));
      }
    }
    suite.checks.push_back(aggregate);
  }

  suite.seconds = seconds_since(start);
  return suite;
}

SuiteReport run_kernel_equivalence_suite(const VerifyOptions& options) {
  const auto start = Clock::now();
  SuiteReport suite;
  suite.suite = "kernel_equivalence";
  const double gammas[] = {0.0, 0.3, 0.5, 1.0};
  const std::size_t class_counts[] = {2, 10, 100, 1000};
  std::uint64_t stream = 300;
  for (double gamma : gammas) {
    for (std::size_t classes : class_counts) {
      Rng rng(options.seed, stream++);
      const int trials = classes >= 1000 ? std::min(options.kernel_trials, 3)
                                         : options.kernel_trials;
      CheckReport aggregate;
      char label[96];
      std::snprintf(label, sizeof(label), "wmse_kernels C=%zu gamma=%g (%d trials)", classes,
                    gamma, trials);
      aggregate.name = label;
      aggregate.side = "value+grads";
      aggregate.tol_abs = 1e-9;
      aggregate.pass = true;
      for (int t = 0; t < trials; ++t)
        fold_worst(aggregate, kernel_equivalence_trial(rng, 4, classes, gamma));
      suite.checks.push_back(aggregate);
    }
  }

  // Structural memory assertion: the efficient kernel at B=32, C=10000 runs in
  // O(B*C) working memory. Inputs, weights and the two gradient outputs are
  // 5*B*C doubles; transient workspace is a handful of scalars.
  {
    const std::size_t batch = 32, classes = 10000;
    Rng rng(options.seed, stream++);
    LogitPair pair;
    pair.reference = random_logits(rng, batch, classes);
    pair.learner = random_logits(rng, batch, classes);
    const WeightTensor w = WeightTensor::from_probabilities(softmax_rows(pair.reference), 0.5);
    const LossResult res = wmse_efficient(pair, w, true);
    const std::size_t buffer_bytes =
        5 * batch * classes * sizeof(double) + wmse_efficient_workspace_bytes(batch, classes);
    CheckReport structural;
    structural.name = "wmse_efficient structural B=32 C=10000";
    structural.side = "memory";
    structural.tol_abs = 0.0;
    structural.max_abs_err = 0.0;
    structural.pass = std::isfinite(res.value) && all_finite(*res.grad_reference) &&
                      all_finite(*res.grad_learner) &&
                      buffer_bytes < std::size_t{100} * 1024 * 1024;
    suite.checks.push_back(structural);
  }
  suite.seconds = seconds_since(start);
  return suite;
}

SuiteReport run_stop_gradient_suite(const VerifyOptions& options) {
  const auto start = Clock::now();
  SuiteReport suite;
  suite.suite = "stop_gradient";
  std::uint64_t stream = 400;

  // Detached reference, asymmetry kept: the decoupled learner gradient is the
  // cross-entropy gradient and nothing else, for any alpha.
  for (double alpha : {1.0, 3.0}) {
    Rng rng(options.seed, stream++);
    CheckReport aggregate;
    aggregate.name = "detached ref, ba off, alpha=" + std::to_string(static_cast<int>(alpha));
    aggregate.side = "learner";
    aggregate.tol_abs = 1e-15;
    aggregate.pass = true;
    for (int t = 0; t < options.stop_gradient_trials; ++t) {
      LogitPair pair;
      pair.reference = random_logits(rng, 2, 6);
      pair.learner = random_logits(rng, 2, 6);
      pair.detach_reference = true;
      LossConfig config;
      config.alpha = alpha;
      const LossResult dkl = dkl_loss(pair, config);
      const LossResult ce = soft_cross_entropy(pair);
      fold_worst(aggregate, compare_matrices(aggregate.name, "learner", *dkl.grad_learner,
                                             *ce.grad_learner, 1e-15, 0.0));
    }
    suite.checks.push_back(aggregate);
  }

  // Broken asymmetry adds exactly the negated weighted pairwise pattern, and
  // that extra term is nonzero whenever the two difference tables disagree.
  {
    Rng rng(options.seed, stream++);
    CheckReport aggregate;
    aggregate.name = "detached ref, ba on, extra term = -alpha * pattern";
    aggregate.side = "learner";
    aggregate.tol_abs = 1e-10;
    aggregate.pass = true;
    bool saw_nonzero = true;
    for (int t = 0; t < options.stop_gradient_trials; ++t) {
      LogitPair pair;
      pair.reference = random_logits(rng, 2, 6);
      pair.learner = random_logits(rng, 2, 6);
      pair.detach_reference = true;
      LossConfig config;
      config.alpha = 2.0;
      config.break_asymmetry = true;
      const LossResult dkl = dkl_loss(pair, config);
      const LossResult ce = soft_cross_entropy(pair);
      Matrix extra(2, 6);
      for (std::size_t i = 0; i < extra.size(); ++i)
        extra.flat()[i] = dkl.grad_learner->flat()[i] - config.beta * ce.grad_learner->flat()[i];

      const WeightTensor w =
          WeightTensor::from_probabilities(softmax_rows(pair.reference), config.gamma);
      Matrix pattern = brute_force_wmse_grad(pair, w);
      for (double& v : pattern.flat()) v *= -config.alpha;
      fold_worst(aggregate,
                 compare_matrices(aggregate.name, "learner", extra, pattern, 1e-10, 0.0));
      double magnitude = 0.0;
      for (double v : extra.flat()) magnitude = std::max(magnitude, std::fabs(v));
      if (magnitude == 0.0) saw_nonzero = false;
    }
    if (!saw_nonzero) aggregate.pass = false;
    suite.checks.push_back(aggregate);
  }
  suite.seconds = seconds_since(start);
  return suite;
}

SuiteReport run_fixture_suite() {
  const auto start = Clock::now();
  SuiteReport suite;
  suite.suite = "fixture";

  LogitPair pair;
  pair.reference = Matrix::from_rows({{1.0, 0.0}});
  pair.learner = Matrix::from_rows({{0.0, 1.0}});

  const LossResult kl = kl_loss(pair);
  const LossResult ce = soft_cross_entropy(pair);
  const WeightTensor w1 = WeightTensor::from_probabilities(softmax_rows(pair.reference), 1.0);
  const LossResult wn = wmse_naive(pair, w1, false);
  const LossResult we = wmse_efficient(pair, w1, false);
  const LossResult jsd = jsd_loss(pair);
  LossConfig config;
  const LossResult dkl = dkl_loss(pair, config);

  const double tol = 1e-12;
  suite.checks.push_back(scalar_check("fixture kl = 0.46212", kl.value, fixture::kKlValue, tol));
  suite.checks.push_back(
      scalar_check("fixture cross_entropy = 1.04432", ce.value, fixture::kCrossEntropyValue, tol));
  suite.checks.push_back(
      scalar_check("fixture wmse_naive = 0.39322", wn.value, fixture::kWmseValue, tol));
  suite.checks.push_back(
      scalar_check("fixture wmse_efficient = 0.39322", we.value, fixture::kWmseValue, tol));
  suite.checks.push_back(scalar_check("fixture jsd = 0.11094", jsd.value, fixture::kJsdValue, tol));
  suite.checks.push_back(scalar_check("fixture dkl = 1.43754", dkl.value, fixture::kDklValue, tol));
  suite.checks.push_back(scalar_check("fixture kl grad_learner[0] = -0.46212",
                                      (*kl.grad_learner)(0, 0), -fixture::kGradLearner, tol));
  suite.checks.push_back(scalar_check("fixture kl grad_learner[1] = +0.46212",
                                      (*kl.grad_learner)(0, 1), fixture::kGradLearner, tol));
  suite.checks.push_back(scalar_check("fixture kl grad_reference[0] = +0.39322",
                                      (*kl.grad_reference)(0, 0), fixture::kGradReference, tol));
  suite.checks.push_back(scalar_check("fixture kl grad_reference[1] = -0.39322",
                                      (*kl.grad_reference)(0, 1), -fixture::kGradReference, tol));
  // Value identity: KL = CE - entropy(reference probabilities).
  const double ent = entropy(softmax(pair.reference.row(0)));
  suite.checks.push_back(
      scalar_check("fixture entropy = 0.58220", ent, fixture::kEntropyValue, tol));
  suite.checks.push_back(
      scalar_check("fixture kl = ce - entropy", kl.value, ce.value - ent, 1e-12));
  suite.seconds = seconds_since(start);
  return suite;
}

std::vector<SuiteReport> run_all_verification_suites(const VerifyOptions& options) {
  std::vector<SuiteReport> reports;
  reports.push_back(run_theorem_equivalence_suite(options));
  reports.push_back(run_finite_difference_suite(options));
  reports.push_back(run_kernel_equivalence_suite(options));
  reports.push_back(run_stop_gradient_suite(options));
  reports.push_back(run_fixture_suite());
  return reports;
}

void print_suite_reports(std::ostream& os, const std::vector<SuiteReport>& reports) {
  char line[256];
  for (const auto& suite : reports) {
    std::snprintf(line, sizeof(line), "== %-22s %6.2f s ==\n", suite.suite.c_str(),
                  suite.seconds);
    os << line;
    for (const auto& c : suite.checks) {
      std::snprintf(line, sizeof(line),
                    "  [%s] %-46s side=%-11s max_abs=%.3e tol_abs=%.1e tol_rel=%.1e\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.side.c_str(), c.max_abs_err,
                    c.tol_abs, c.tol_rel);
      os << line;
    }
  }
}

bool all_suites_pass(const std::vector<SuiteReport>& reports) {
  for (const auto& suite : reports)
    if (!suite.pass()) return false;
  return true;
}

}  // namespace gkl
