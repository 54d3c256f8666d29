#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gkl/grad_check.hpp"
#include "gkl/verify.hpp"

using namespace gkl;

TEST_CASE("finite differences of a constant are zero") {
  LogitPair pair;
  pair.reference = Matrix(2, 3, 0.5);
  pair.learner = Matrix(2, 3, -0.5);
  const Matrix fd = finite_diff([](const LogitPair&) { return 42.0; }, pair, Side::kReference,
                                1e-5);
  for (double v : fd.flat()) CHECK(v == 0.0);
}

TEST_CASE("finite differences are exact on a quadratic") {
  LogitPair pair;
  pair.reference = Matrix::from_rows({{1.0, -2.0, 3.0}});
  pair.learner = Matrix(1, 3, 0.0);
  const auto quadratic = [](const LogitPair& p) {
    double acc = 0.0;
    for (double v : p.reference.flat()) acc += v * v;
    return acc;
  };
  const Matrix fd = finite_diff(quadratic, pair, Side::kReference, 1e-5);
  CHECK(fd(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(fd(0, 1) == doctest::Approx(-4.0).epsilon(1e-9));
  CHECK(fd(0, 2) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("finite differences reproduce the canonical kl gradient") {
  LogitPair pair;
  pair.reference = Matrix::from_rows({{1.0, 0.0}});
  pair.learner = Matrix::from_rows({{0.0, 1.0}});
  const Matrix fd =
      finite_diff([](const LogitPair& p) { return kl_loss(p).value; }, pair, Side::kLearner, 1e-5);
  CHECK(std::fabs(fd(0, 0) + fixture::kGradLearner) < 1e-7);
  CHECK(std::fabs(fd(0, 1) - fixture::kGradLearner) < 1e-7);
}

TEST_CASE("finite_diff validates the step and evaluator output") {
  LogitPair pair;
  pair.reference = Matrix(1, 2, 0.0);
  pair.learner = Matrix(1, 2, 0.0);
  const auto ok = [](const LogitPair&) { return 1.0; };
  CHECK_THROWS_AS(finite_diff(ok, pair, Side::kReference, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff(ok, pair, Side::kReference, 1e-2), std::invalid_argument);
  const auto bad = [](const LogitPair&) { return std::nan(""); };
  CHECK_THROWS_AS(finite_diff(bad, pair, Side::kReference, 1e-5), std::runtime_error);
}

TEST_CASE("equivalence trials stay below tolerance for any seed") {
  for (std::uint64_t seed : {1ULL, 7ULL, 99ULL}) {
    Rng rng(seed, 0);
    const CheckReport report = equivalence_trial(rng, 4, 10);
    CHECK(report.pass);
    CHECK(report.max_abs_err < 1e-10);
  }
}

TEST_CASE("two-class single-sample equivalence is essentially exact") {
  Rng rng(3, 0);
  const CheckReport report = equivalence_trial(rng, 1, 2);
  CHECK(report.max_abs_err < 1e-15);
}

TEST_CASE("equivalence respects a detached reference") {
  Rng rng(4, 0);
  const CheckReport report = equivalence_trial(rng, 2, 5, /*detach_reference=*/true);
  CHECK(report.side == "learner");
  CHECK(report.pass);
  CHECK(report.max_abs_err < 1e-10);
}

TEST_CASE("kernel equivalence trials across gammas") {
  Rng rng(5, 0);
  for (double gamma : {0.0, 0.3, 0.5, 1.0}) {
    const CheckReport report = kernel_equivalence_trial(rng, 4, 50, gamma);
    CHECK(report.pass);
    CHECK(report.max_abs_err < 1e-9);
  }
  const CheckReport big = kernel_equivalence_trial(rng, 2, 1000, 0.5);
  CHECK(big.pass);
}

TEST_CASE("compare_matrices tolerance semantics") {
  const Matrix a = Matrix::from_rows({{1.0, 1e-9}});
  Matrix b = a;
  b(0, 0) = 1.0 + 5e-5;  // passes on relative grounds
  b(0, 1) = 5e-8;        // passes on the absolute floor
  const CheckReport ok = compare_matrices("case", "side", a, b, 1e-7, 1e-4);
  CHECK(ok.pass);

  b(0, 0) = 1.1;  // fails both
  const CheckReport fail = compare_matrices("case", "side", a, b, 1e-7, 1e-4);
  CHECK_FALSE(fail.pass);
  CHECK(fail.worst_row == 0);
  CHECK(fail.worst_col == 0);
  CHECK(fail.max_abs_err == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("verification suites pass end to end at reduced trial counts") {
  VerifyOptions options;
  options.theorem_trials = 10;
  options.fd_trials = 6;
  options.kernel_trials = 3;
  options.stop_gradient_trials = 10;
  const auto reports = run_all_verification_suites(options);
  CHECK(all_suites_pass(reports));
  CHECK(reports.size() == 5);
}

TEST_CASE("suites are deterministic given the seed") {
  VerifyOptions options;
  options.seed = 1234;
  options.theorem_trials = 5;
  const SuiteReport a = run_theorem_equivalence_suite(options);
  const SuiteReport b = run_theorem_equivalence_suite(options);
  REQUIRE(a.checks.size() == b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i)
    CHECK(a.checks[i].max_abs_err == b.checks[i].max_abs_err);
}

TEST_CASE("an injected wrong-sign gradient makes the fd suite fail on kl/learner") {
  VerifyOptions options;
  options.fd_trials = 2;
  options.inject_wrong_sign = true;
  const SuiteReport report = run_finite_difference_suite(options);
  CHECK_FALSE(report.pass());
  bool found = false;
  for (const auto& check : report.checks)
    if (check.name == "kl" && check.side == "learner" && !check.pass) found = true;
  CHECK(found);
}
