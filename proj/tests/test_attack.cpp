#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gkl/attack.hpp"
#include "gkl/dataset.hpp"
#include "gkl/grad_check.hpp"
#include "gkl/mlp.hpp"
#include "gkl/softmax.hpp"

using namespace gkl;

namespace {

MlpModel small_model(std::uint64_t seed, std::vector<std::size_t> layers = {2, 8, 2}) {
  Rng rng(seed, 0);
  return MlpModel(layers, rng);
}

LabeledDataset small_blobs(std::uint64_t seed, std::size_t per_class = 40) {
  Rng rng(seed, 1);
  const std::vector<std::size_t> counts(2, per_class);
  return make_blobs(rng, 2, counts, 2.0, 0.6);
}

}  // namespace

TEST_CASE("epsilon zero returns the input exactly") {
  const MlpModel model = small_model(1);
  const LabeledDataset data = small_blobs(1);
  AttackConfig config;
  config.epsilon = 0.0;
  config.step_size = 0.1;
  config.steps = 5;
  config.random_start = true;
  Rng rng(2, 0);
  const Matrix adv = pgd_attack(model, data.inputs, data.labels, nullptr, config, rng,
                                data.box_lo, data.box_hi);
  CHECK(max_abs_diff(adv, data.inputs) == 0.0);
}

TEST_CASE("one step without random start is fgsm") {
  const MlpModel model = small_model(3);
  const LabeledDataset data = small_blobs(3, 10);
  AttackConfig config;
  config.epsilon = 0.25;
  config.step_size = 0.25;
  config.steps = 1;

  Rng rng(4, 0);
  const Matrix adv = pgd_attack(model, data.inputs, data.labels, nullptr, config, rng,
                                data.box_lo, data.box_hi);

  // Expected: x + eps * sign(input gradient of the mean cross-entropy).
  ForwardCache cache;
  const Matrix logits = mlp_forward(model, data.inputs, &cache);
  Matrix grad_logits = softmax_rows(logits);
  for (std::size_t b = 0; b < logits.rows(); ++b)
    grad_logits(b, static_cast<std::size_t>(data.labels[b])) -= 1.0;
  for (double& v : grad_logits.flat()) v /= static_cast<double>(logits.rows());
  const MlpGradients grads = mlp_backward(model, cache, grad_logits, true);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double g = grads.inputs.flat()[i];
    const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    CHECK(adv.flat()[i] ==
          doctest::Approx(data.inputs.flat()[i] + 0.25 * sign).epsilon(1e-12));
  }
}

TEST_CASE("linear binary model: the attack reaches the closed-form optimum") {
  // For a linear model with per-sample CE, the optimal L-inf perturbation
  // moves every coordinate by eps against the margin: x - eps * sign(w_y - w_k).
  MlpModel model = MlpModel::zeros({2, 2});
  model.weight(0) = Matrix::from_rows({{1.0, -1.0}, {0.5, -0.5}});
  const Matrix inputs = Matrix::from_rows({{0.4, -0.2}, {-1.0, 0.3}});
  const std::vector<int> labels{0, 1};

  AttackConfig config;
  config.epsilon = 0.3;
  config.step_size = 0.1;
  config.steps = 10;
  Rng rng(5, 0);
  const Matrix adv =
      pgd_attack(model, inputs, labels, nullptr, config, rng, -10.0, 10.0);

  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 2; ++c) {
      // Gradient of CE w.r.t. input coordinate c has the sign of
      // -(w[c][y] - w[c][other]); the optimum saturates the box against it.
      const std::size_t y = static_cast<std::size_t>(labels[b]);
      const std::size_t other = 1 - y;
      const double direction = model.weight(0)(c, other) - model.weight(0)(c, y);
      const double expected = inputs(b, c) + 0.3 * (direction > 0 ? 1.0 : -1.0);
      CHECK(adv(b, c) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("attacks never leave the epsilon ball or the domain box") {
  const MlpModel model = small_model(6, {2, 16, 3});
  Rng data_rng(6, 1);
  const std::vector<std::size_t> counts{30, 30, 30};
  LabeledDataset data = make_blobs(data_rng, 3, counts, 3.0, 1.0);
  data.box_lo = -4.0;
  data.box_hi = 4.0;
  // The ball invariant presumes inputs inside the declared domain box.
  for (double& v : data.inputs.flat()) v = std::clamp(v, data.box_lo, data.box_hi);

  for (double eps : {0.05, 0.3, 1.5}) {
    AttackConfig config;
    config.epsilon = eps;
    config.step_size = eps / 4.0;
    config.steps = 10;
    config.random_start = true;
    Rng rng(7, 0);
    const Matrix natural = mlp_forward(model, data.inputs);
    for (AttackObjective objective :
         {AttackObjective::kCrossEntropy, AttackObjective::kKlToNatural}) {
      config.objective = objective;
      const Matrix adv = pgd_attack(model, data.inputs, data.labels, &natural, config, rng,
                                    data.box_lo, data.box_hi);
      for (std::size_t i = 0; i < adv.size(); ++i) {
        CHECK(std::fabs(adv.flat()[i] - data.inputs.flat()[i]) <= eps + 1e-12);
        CHECK(adv.flat()[i] <= data.box_hi);
        CHECK(adv.flat()[i] >= data.box_lo);
      }
    }
  }
}

TEST_CASE("doubling the iterations does not decrease the objective") {
  const MlpModel model = small_model(8, {2, 12, 2});
  const LabeledDataset data = small_blobs(8, 50);
  AttackConfig short_run;
  short_run.epsilon = 0.4;
  short_run.step_size = 0.05;
  short_run.steps = 5;

  AttackConfig long_run = short_run;
  long_run.steps = 10;

  std::size_t non_decreasing = 0;
  const std::size_t samples = data.size();
  for (std::size_t i = 0; i < samples; ++i) {
    Matrix one(1, 2);
    one(0, 0) = data.inputs(i, 0);
    one(0, 1) = data.inputs(i, 1);
    const std::vector<int> label{data.labels[i]};
    Rng rng_a(9, 0), rng_b(9, 0);
    const Matrix adv_short =
        pgd_attack(model, one, label, nullptr, short_run, rng_a, data.box_lo, data.box_hi);
    const Matrix adv_long =
        pgd_attack(model, one, label, nullptr, long_run, rng_b, data.box_lo, data.box_hi);
    const double v_short =
        attack_objective_value(model, adv_short, label, nullptr, short_run.objective);
    const double v_long =
        attack_objective_value(model, adv_long, label, nullptr, long_run.objective);
    if (v_long >= v_short - 1e-9) ++non_decreasing;
  }
  CHECK(static_cast<double>(non_decreasing) >= 0.95 * static_cast<double>(samples));
}

TEST_CASE("robust accuracy at epsilon zero equals clean accuracy") {
  const MlpModel model = small_model(10);
  const LabeledDataset data = small_blobs(10);
  AttackConfig config;
  config.epsilon = 0.0;
  config.step_size = 0.1;
  config.steps = 3;
  Rng rng(11, 0);
  CHECK(robust_accuracy(model, data, config, rng) ==
        doctest::Approx(clean_accuracy(model, data)));
}

TEST_CASE("random-weight models sit at chance level on balanced binary data") {
  double total = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const MlpModel model = small_model(100 + static_cast<std::uint64_t>(s));
    const LabeledDataset data = small_blobs(200 + static_cast<std::uint64_t>(s), 100);
    total += clean_accuracy(model, data);
  }
  CHECK(total / seeds == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("robust accuracy is non-increasing in epsilon") {
  Rng train_rng(12, 0);
  const LabeledDataset data = small_blobs(12, 60);
  const MlpModel model = small_model(12, {2, 16, 2});
  double previous = 1.1;
  for (double eps : {0.0, 0.05, 0.1}) {
    AttackConfig config;
    config.epsilon = eps;
    config.step_size = eps > 0.0 ? eps / 4.0 : 0.1;
    config.steps = 10;
    Rng rng(13, 0);
    const double acc = robust_accuracy(model, data, config, rng);
    // One-sample slack for attack suboptimality.
    CHECK(acc <= previous + 1.0 / static_cast<double>(data.size()) + 1e-12);
    previous = acc;
  }
}

TEST_CASE("argmax ties break toward the lowest index") {
  CHECK(argmax_row(std::vector<double>{1.0, 1.0, 0.5}) == 0);
  CHECK(argmax_row(std::vector<double>{0.0, 2.0, 2.0}) == 1);
}

TEST_CASE("attack configs are validated") {
  const MlpModel model = small_model(14);
  const LabeledDataset data = small_blobs(14, 5);
  Rng rng(15, 0);
  AttackConfig bad;
  bad.epsilon = -1.0;
  bad.step_size = 0.1;
  CHECK_THROWS_AS(
      pgd_attack(model, data.inputs, data.labels, nullptr, bad, rng, -10.0, 10.0),
      std::invalid_argument);
  bad.epsilon = 0.1;
  bad.steps = 0;
  CHECK_THROWS_AS(
      pgd_attack(model, data.inputs, data.labels, nullptr, bad, rng, -10.0, 10.0),
      std::invalid_argument);
  AttackConfig kl;
  kl.epsilon = 0.1;
  kl.step_size = 0.05;
  kl.objective = AttackObjective::kKlToNatural;
  CHECK_THROWS_AS(
      pgd_attack(model, data.inputs, data.labels, nullptr, kl, rng, -10.0, 10.0),
      std::invalid_argument);
}
