#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gkl/grad_check.hpp"

namespace gkl {

/// Randomized verification suites for the divergence family, shared by the
/// CLI `verify` subcommand and the acceptance tests:
///   - theorem equivalence: KL and decoupled gradients coincide (< 1e-10),
///   - finite differences: every emitted analytic gradient (< 1e-4 rel,
///     1e-7 abs floor, whichever is looser),
///   - kernel equivalence: naive vs memory-efficient wMSE (< 1e-9),
///   - stop-gradient semantics: detached-reference behaviour with and without
///     broken asymmetry (1e-15 / 1e-10),
///   - fixture regression: the canonical two-class values.
/// Deterministic given the options' seed.

struct SuiteReport {
  std::string suite;
  std::vector<CheckReport> checks;
  double seconds = 0.0;

  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct VerifyOptions {
  std::uint64_t seed = 7041;
  int theorem_trials = 100;       // per (batch, classes) case
  int fd_trials = 50;             // per loss/side case
  int kernel_trials = 20;         // per (gamma, classes) case, fewer at C=1000
  int stop_gradient_trials = 50;  // per semantics case
  bool inject_wrong_sign = false;  // harness self-test: flips one analytic
                                   // gradient so the FD suite must fail
};

SuiteReport run_theorem_equivalence_suite(const VerifyOptions& options);
SuiteReport run_finite_difference_suite(const VerifyOptions& options);
SuiteReport run_kernel_equivalence_suite(const VerifyOptions& options);
SuiteReport run_stop_gradient_suite(const VerifyOptions& options);
SuiteReport run_fixture_suite();

std::vector<SuiteReport> run_all_verification_suites(const VerifyOptions& options);

void print_suite_reports(std::ostream& os, const std::vector<SuiteReport>& reports);
bool all_suites_pass(const std::vector<SuiteReport>& reports);

/// Canonical two-class fixture constants, derived from the closed forms
/// (probabilities e/(1+e) and 1/(1+e)) and frozen here; the fixture suite and
/// the unit tests assert against these at 1e-12.
namespace fixture {
inline constexpr double kKlValue = 0.46211715726000976;
inline constexpr double kCrossEntropyValue = 1.0443202661482277;
inline constexpr double kEntropyValue = 0.58220310888821796;
inline constexpr double kWmseValue = 0.39322386648296370;
inline constexpr double kJsdValue = 0.11094407167172735;
inline constexpr double kDklValue = 1.4375441326311914;
inline constexpr double kGradLearner = 0.46211715726000976;   // -+ on [1,0] vs [0,1]
inline constexpr double kGradReference = 0.39322386648296370;  // +- on [1,0] vs [0,1]
}  // namespace fixture

}  // namespace gkl
