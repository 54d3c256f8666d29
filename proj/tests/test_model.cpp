#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gkl/grad_check.hpp"
#include "gkl/mlp.hpp"
#include "gkl/rng.hpp"

using namespace gkl;

TEST_CASE("zero model gives zero logits") {
  const MlpModel model = MlpModel::zeros({3, 4, 2});
  const Matrix inputs = Matrix::from_rows({{1.0, -2.0, 0.5}});
  const Matrix logits = mlp_forward(model, inputs);
  CHECK(logits(0, 0) == 0.0);
  CHECK(logits(0, 1) == 0.0);
}

TEST_CASE("identity single layer passes inputs through") {
  MlpModel model = MlpModel::zeros({2, 2});
  model.weight(0)(0, 0) = 1.0;
  model.weight(0)(1, 1) = 1.0;
  const Matrix inputs = Matrix::from_rows({{3.0, -4.0}, {0.0, 2.5}});
  const Matrix logits = mlp_forward(model, inputs);
  CHECK(max_abs_diff(logits, inputs) == 0.0);
}

TEST_CASE("forward is bit-identical across runs with the same seed") {
  Rng rng_a(77, 0);
  Rng rng_b(77, 0);
  const MlpModel a({2, 8, 3}, rng_a);
  const MlpModel b({2, 8, 3}, rng_b);
  const Matrix inputs = Matrix::from_rows({{0.3, -1.2}, {2.0, 0.0}});
  const Matrix la = mlp_forward(a, inputs);
  const Matrix lb = mlp_forward(b, inputs);
  CHECK(max_abs_diff(la, lb) == 0.0);

  // Regression pin for the initialization scheme itself: same draws, first
  // weight entry is scale * first normal deviate.
  Rng rng_c(77, 0);
  const double expected = std::sqrt(2.0 / 2.0) * rng_c.normal();
  CHECK(a.weight(0)(0, 0) == expected);
}

TEST_CASE("zero logit gradients give zero parameter gradients") {
  Rng rng(78, 0);
  const MlpModel model({2, 5, 3}, rng);
  const Matrix inputs = random_logits(rng, 4, 2);
  ForwardCache cache;
  mlp_forward(model, inputs, &cache);
  const MlpGradients grads = mlp_backward(model, cache, Matrix(4, 3, 0.0));
  for (const auto& w : grads.weights)
    for (double g : w.flat()) CHECK(g == 0.0);
}

TEST_CASE("single linear layer weight gradient is inputs^T grad") {
  Rng rng(79, 0);
  const MlpModel model({2, 3}, rng);
  const Matrix inputs = random_logits(rng, 5, 2);
  ForwardCache cache;
  mlp_forward(model, inputs, &cache);
  Matrix grad_logits = random_logits(rng, 5, 3);
  const MlpGradients grads = mlp_backward(model, cache, grad_logits);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < 3; ++c) {
      double expected = 0.0;
      for (std::size_t r = 0; r < 5; ++r) expected += inputs(r, k) * grad_logits(r, c);
      CHECK(grads.weights[0](k, c) == doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("backward matches finite differences on every parameter of a 2-16-8-3 model") {
  Rng rng(80, 0);
  MlpModel model({2, 16, 8, 3}, rng);
  const Matrix inputs = random_logits(rng, 6, 2);
  Matrix grad_logits = random_logits(rng, 6, 3);

  ForwardCache cache;
  mlp_forward(model, inputs, &cache);
  const MlpGradients grads = mlp_backward(model, cache, grad_logits);

  // Scalar objective sum(logits * grad_logits); finite differences over the
  // flattened parameter vector.
  const auto objective = [&](const MlpModel& m) {
    const Matrix logits = mlp_forward(m, inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
      acc += logits.flat()[i] * grad_logits.flat()[i];
    return acc;
  };

  std::vector<double> params = model.flatten();
  std::vector<double> analytic;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto w = grads.weights[l].flat();
    analytic.insert(analytic.end(), w.begin(), w.end());
    analytic.insert(analytic.end(), grads.biases[l].begin(), grads.biases[l].end());
  }
  REQUIRE(analytic.size() == params.size());

  const double step = 1e-5;
  MlpModel probe = model;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> perturbed = params;
    perturbed[i] = params[i] + step;
    probe.unflatten(perturbed);
    const double plus = objective(probe);
    perturbed[i] = params[i] - step;
    probe.unflatten(perturbed);
    const double minus = objective(probe);
    const double fd = (plus - minus) / (2.0 * step);
    const double err = std::fabs(fd - analytic[i]);
    const double denom = std::max(std::fabs(fd), std::fabs(analytic[i]));
    CHECK((err <= 1e-7 || err / denom <= 1e-5));
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(81, 0);
  const MlpModel model({3, 6, 2}, rng);
  Matrix inputs = random_logits(rng, 2, 3);
  const Matrix grad_logits = random_logits(rng, 2, 2);

  ForwardCache cache;
  mlp_forward(model, inputs, &cache);
  const MlpGradients grads = mlp_backward(model, cache, grad_logits, /*want_input_grads=*/true);
  REQUIRE(grads.inputs.rows() == 2);

  const double step = 1e-5;
  for (std::size_t r = 0; r < inputs.rows(); ++r)
    for (std::size_t c = 0; c < inputs.cols(); ++c) {
      const double orig = inputs(r, c);
      inputs(r, c) = orig + step;
      Matrix lp = mlp_forward(model, inputs);
      inputs(r, c) = orig - step;
      Matrix lm = mlp_forward(model, inputs);
      inputs(r, c) = orig;
      double plus = 0.0, minus = 0.0;
      for (std::size_t i = 0; i < lp.size(); ++i) {
        plus += lp.flat()[i] * grad_logits.flat()[i];
        minus += lm.flat()[i] * grad_logits.flat()[i];
      }
      const double fd = (plus - minus) / (2.0 * step);
      CHECK(std::fabs(fd - grads.inputs(r, c)) < 1e-6);
    }
}

TEST_CASE("backward rejects a stale cache") {
  Rng rng(82, 0);
  const MlpModel model({2, 4, 2}, rng);
  const MlpModel other({2, 7, 2}, rng);
  const Matrix inputs = random_logits(rng, 3, 2);
  ForwardCache cache;
  mlp_forward(other, inputs, &cache);
  CHECK_THROWS_AS(mlp_backward(model, cache, Matrix(3, 2, 0.0)), std::invalid_argument);
  ForwardCache empty;
  CHECK_THROWS_AS(mlp_backward(model, empty, Matrix(3, 2, 0.0)), std::invalid_argument);
}

TEST_CASE("sgd step semantics") {
  Rng rng(83, 0);
  MlpModel model({2, 2}, rng);
  const std::vector<double> before = model.flatten();

  MlpGradients grads;
  grads.weights.push_back(Matrix(2, 2, 1.0));
  grads.biases.push_back(std::vector<double>(2, 1.0));

  SUBCASE("zero learning rate leaves the model unchanged") {
    SgdOptimizer opt(model, SgdConfig{0.0, 0.9, 1e-4, LrSchedule::kConstant, 10});
    opt.step(model, grads, 0);
    CHECK(model.flatten() == before);
  }

  SUBCASE("plain gradient step without momentum or decay") {
    SgdOptimizer opt(model, SgdConfig{0.1, 0.0, 0.0, LrSchedule::kConstant, 10});
    opt.step(model, grads, 0);
    const std::vector<double> after = model.flatten();
    for (std::size_t i = 0; i < after.size(); ++i)
      CHECK(after[i] == doctest::Approx(before[i] - 0.1).epsilon(1e-15));
  }

  SUBCASE("momentum accumulates velocity") {
    SgdOptimizer opt(model, SgdConfig{1.0, 0.5, 0.0, LrSchedule::kConstant, 10});
    opt.step(model, grads, 0);  // v = 1, p -= 1
    opt.step(model, grads, 1);  // v = 1.5, p -= 1.5
    const std::vector<double> after = model.flatten();
    for (std::size_t i = 0; i < after.size(); ++i)
      CHECK(after[i] == doctest::Approx(before[i] - 2.5).epsilon(1e-12));
  }
}

TEST_CASE("cosine schedule endpoints") {
  const MlpModel model = MlpModel::zeros({2, 2});
  SgdOptimizer opt(model, SgdConfig{0.2, 0.9, 0.0, LrSchedule::kCosine, 100});
  CHECK(opt.learning_rate_at(0) == doctest::Approx(0.2));
  CHECK(opt.learning_rate_at(50) == doctest::Approx(0.1));
  CHECK(opt.learning_rate_at(100) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("flatten/unflatten round-trips and validates length") {
  Rng rng(84, 0);
  MlpModel model({3, 5, 2}, rng);
  const std::vector<double> params = model.flatten();
  MlpModel copy = MlpModel::zeros({3, 5, 2});
  copy.unflatten(params);
  CHECK(copy.flatten() == params);
  std::vector<double> short_params(params.begin(), params.end() - 1);
  CHECK_THROWS_AS(copy.unflatten(short_params), std::invalid_argument);
}

TEST_CASE("forward validates the input dimension") {
  const MlpModel model = MlpModel::zeros({3, 2});
  CHECK_THROWS_AS(mlp_forward(model, Matrix(1, 2, 0.0)), std::invalid_argument);
}
