#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gkl/pipeline.hpp"
#include "gkl/softmax.hpp"

using namespace gkl;

namespace {

LabeledDataset blobs_split(std::uint64_t seed, std::uint64_t stream, std::size_t classes,
                           std::size_t per_class, double sigma = 0.8) {
  Rng rng(seed, stream);
  const std::vector<std::size_t> counts(classes, per_class);
  return make_blobs(rng, classes, counts, 3.0, sigma);
}

TrainConfig fast_config(std::uint64_t seed, LossKind loss) {
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.learning_rate = 0.05;
  config.momentum = 0.9;
  config.seed = seed;
  config.loss = loss;
  return config;
}

double max_param_distance(const MlpModel& a, const MlpModel& b) {
  const auto pa = a.flatten();
  const auto pb = b.flatten();
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    worst = std::max(worst, std::fabs(pa[i] - pb[i]));
  return worst;
}

}  // namespace

TEST_CASE("group split is 3/4/3 at ten classes ordered by count") {
  const std::vector<std::size_t> counts{500, 359, 258, 185, 133, 96, 69, 49, 36, 25};
  const GroupSplit split = split_by_frequency(counts);
  REQUIRE(split.many.size() == 3);
  REQUIRE(split.medium.size() == 4);
  REQUIRE(split.few.size() == 3);
  CHECK(split.many == std::vector<std::size_t>{0, 1, 2});
  CHECK(split.few == std::vector<std::size_t>{7, 8, 9});
}

TEST_CASE("zero divergence weight reproduces the hard-label baseline exactly") {
  const LabeledDataset train = blobs_split(50, 10, 3, 30);
  const LabeledDataset test = blobs_split(50, 11, 3, 20);
  Rng teacher_rng(51, 0);
  const MlpModel teacher({2, 12, 3}, teacher_rng);

  TrainConfig with_div = fast_config(7, LossKind::kKl);
  with_div.divergence_weight = 0.0;
  TrainConfig baseline = fast_config(7, LossKind::kHardCe);

  MlpModel student_a, student_b;
  const ExperimentResult ra =
      distill(teacher, {2, 8, 3}, train, test, with_div, &student_a);
  const ExperimentResult rb =
      distill(teacher, {2, 8, 3}, train, test, baseline, &student_b);
  CHECK(max_param_distance(student_a, student_b) == 0.0);
  CHECK(ra.clean_accuracy == rb.clean_accuracy);
  CHECK(ra.epoch_train_loss == rb.epoch_train_loss);
}

TEST_CASE("kl and dkl distillation trajectories coincide") {
  const LabeledDataset train = blobs_split(60, 10, 4, 40);
  const LabeledDataset test = blobs_split(60, 11, 4, 25);
  Rng teacher_rng(61, 0);
  const MlpModel teacher({2, 16, 4}, teacher_rng);

  TrainConfig kl_config = fast_config(9, LossKind::kKl);
  kl_config.epochs = 5;
  TrainConfig dkl_config = fast_config(9, LossKind::kDkl);
  dkl_config.epochs = 5;

  MlpModel student_kl, student_dkl;
  const ExperimentResult rk = distill(teacher, {2, 10, 4}, train, test, kl_config, &student_kl);
  const ExperimentResult rd =
      distill(teacher, {2, 10, 4}, train, test, dkl_config, &student_dkl);
  CHECK(max_param_distance(student_kl, student_dkl) < 1e-9);
  CHECK(rk.clean_accuracy == rd.clean_accuracy);
}

TEST_CASE("with a detached teacher, alpha matters only once asymmetry is broken") {
  const LabeledDataset train = blobs_split(70, 10, 3, 24);
  const LabeledDataset test = blobs_split(70, 11, 3, 12);
  Rng teacher_rng(71, 0);
  const MlpModel teacher({2, 10, 3}, teacher_rng);

  const auto run = [&](double alpha, bool break_asymmetry) {
    TrainConfig config = fast_config(13, LossKind::kDkl);
    config.epochs = 1;
    config.loss_config.alpha = alpha;
    config.loss_config.break_asymmetry = break_asymmetry;
    MlpModel student;
    distill(teacher, {2, 6, 3}, train, test, config, &student);
    return student;
  };

  // Asymmetry kept: the weighted-MSE term is fully detached, so alpha is inert.
  CHECK(max_param_distance(run(1.0, false), run(9.0, false)) == 0.0);
  // Asymmetry broken: alpha drives the learner gradient from the first step.
  CHECK(max_param_distance(run(1.0, true), run(9.0, true)) > 0.0);
}

TEST_CASE("distillation runs are bit-reproducible per (seed, config)") {
  const LabeledDataset train = blobs_split(80, 10, 3, 20);
  const LabeledDataset test = blobs_split(80, 11, 3, 12);
  Rng teacher_rng(81, 0);
  const MlpModel teacher({2, 8, 3}, teacher_rng);
  TrainConfig config = fast_config(17, LossKind::kGkl);
  config.loss_config.gamma = 0.3;
  config.loss_config.weight_mode = WeightMode::kClassWise;

  MlpModel student_a, student_b;
  const ExperimentResult ra = distill(teacher, {2, 6, 3}, train, test, config, &student_a);
  const ExperimentResult rb = distill(teacher, {2, 6, 3}, train, test, config, &student_b);
  CHECK(max_param_distance(student_a, student_b) == 0.0);
  CHECK(ra.epoch_train_loss == rb.epoch_train_loss);
  CHECK(ra.per_class_margin == rb.per_class_margin);
  CHECK(ra.clean_accuracy == rb.clean_accuracy);
}

TEST_CASE("distill validates class counts") {
  const LabeledDataset train = blobs_split(90, 10, 3, 10);
  Rng teacher_rng(91, 0);
  const MlpModel teacher({2, 6, 4}, teacher_rng);  // 4 outputs vs 3 classes
  CHECK_THROWS_AS(distill(teacher, {2, 6, 4}, train, train, fast_config(1, LossKind::kKl)),
                  std::invalid_argument);
  const MlpModel ok_teacher = MlpModel::zeros({2, 6, 3});
  CHECK_THROWS_AS(distill(ok_teacher, {2, 6, 5}, train, train, fast_config(1, LossKind::kKl)),
                  std::invalid_argument);
}

TEST_CASE("zero-epsilon adversarial training equals training with no divergence term") {
  const LabeledDataset train = blobs_split(100, 10, 2, 30);
  const LabeledDataset test = blobs_split(100, 11, 2, 15);

  AttackConfig attack;
  attack.epsilon = 0.0;
  attack.step_size = 0.05;
  attack.steps = 3;
  attack.objective = AttackObjective::kKlToNatural;
  AttackConfig eval_attack = attack;

  TrainConfig with_div = fast_config(23, LossKind::kKl);
  with_div.epochs = 2;
  with_div.divergence_weight = 3.0;
  TrainConfig without = with_div;
  without.divergence_weight = 0.0;

  MlpModel model_a, model_b;
  const ExperimentResult ra =
      adversarial_train({2, 8, 2}, train, test, with_div, attack, eval_attack, &model_a);
  const ExperimentResult rb =
      adversarial_train({2, 8, 2}, train, test, without, attack, eval_attack, &model_b);
  // Identical branches make every divergence gradient exactly zero.
  CHECK(max_param_distance(model_a, model_b) == 0.0);
  REQUIRE(ra.robust_accuracy.has_value());
  CHECK(*ra.robust_accuracy == ra.clean_accuracy);
  CHECK(*rb.robust_accuracy == rb.clean_accuracy);
}

TEST_CASE("adversarial training beats standard training on robustness") {
  // Sanity direction over a few seeds: lambda > 0 should not hurt robustness
  // on average.
  AttackConfig attack;
  attack.epsilon = 0.25;
  attack.step_size = 0.0625;
  attack.steps = 5;
  attack.random_start = true;
  attack.objective = AttackObjective::kKlToNatural;
  AttackConfig eval_attack = attack;
  eval_attack.steps = 10;
  eval_attack.random_start = false;
  eval_attack.objective = AttackObjective::kCrossEntropy;

  double trades = 0.0, standard = 0.0;
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    const LabeledDataset train = blobs_split(110 + s, 10, 2, 40, 0.5);
    const LabeledDataset test = blobs_split(110 + s, 11, 2, 25, 0.5);
    TrainConfig config = fast_config(31 + static_cast<std::uint64_t>(s), LossKind::kKl);
    config.epochs = 6;
    config.divergence_weight = 5.0;
    const ExperimentResult rt =
        adversarial_train({2, 12, 2}, train, test, config, attack, eval_attack);
    TrainConfig plain = config;
    plain.divergence_weight = 0.0;
    const ExperimentResult rs =
        adversarial_train({2, 12, 2}, train, test, plain, attack, eval_attack);
    trades += *rt.robust_accuracy;
    standard += *rs.robust_accuracy;
  }
  CHECK(trades / seeds >= standard / seeds - 1e-12);
}

TEST_CASE("evaluate: uniform logits pick the tie-break class everywhere") {
  const LabeledDataset data = blobs_split(120, 10, 4, 25);
  const MlpModel uniform = MlpModel::zeros({2, 4});
  Rng rng(121, 0);
  const ExperimentResult result = evaluate(uniform, data, nullptr, rng);
  // Every argmax tie resolves to class 0.
  const auto counts = data.class_counts();
  const double expected =
      static_cast<double>(counts[0]) / static_cast<double>(data.size());
  CHECK(result.clean_accuracy == doctest::Approx(expected));
  for (std::size_t y = 0; y < 4; ++y) {
    CHECK(result.per_class_margin[y] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(result.per_class_true_score[y] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("evaluate margins agree with a hand-built class table") {
  const LabeledDataset data = blobs_split(130, 10, 3, 30);
  Rng model_rng(131, 0);
  const MlpModel model({2, 10, 3}, model_rng);
  Rng rng(132, 0);
  const ExperimentResult result = evaluate(model, data, nullptr, rng);

  const Matrix logits = mlp_forward(model, data.inputs);
  ClassWeightTable table(3);
  table.update(logits, data.labels, 1.0);
  table.commit_epoch();
  for (std::size_t y = 0; y < 3; ++y)
    CHECK(result.per_class_margin[y] == doctest::Approx(table.margin(y)).epsilon(1e-14));
}

TEST_CASE("a memorizing model evaluates to perfect accuracy") {
  const LabeledDataset train = blobs_split(140, 10, 3, 40, 0.4);
  TrainConfig config = fast_config(41, LossKind::kHardCe);
  config.epochs = 40;
  config.learning_rate = 0.1;
  const MlpModel model = train_classifier({2, 24, 3}, train, config);
  CHECK(clean_accuracy(model, train) == doctest::Approx(1.0));
}

TEST_CASE("divergence_loss applies the distillation temperature to kl") {
  Rng rng(150, 0);
  LogitPair pair;
  pair.reference = Matrix::from_rows({{1.0, -0.5, 0.2}});
  pair.learner = Matrix::from_rows({{-0.3, 0.8, 0.1}});
  LossConfig config;
  config.kd_temperature = 4.0;
  const LossResult res = divergence_loss(LossKind::kKl, pair, config);

  LogitPair scaled = pair;
  for (double& v : scaled.reference.flat()) v /= 4.0;
  for (double& v : scaled.learner.flat()) v /= 4.0;
  const LossResult base = kl_loss(scaled);
  CHECK(res.value == doctest::Approx(16.0 * base.value).epsilon(1e-13));
  for (std::size_t i = 0; i < res.grad_learner->size(); ++i)
    CHECK(res.grad_learner->flat()[i] ==
          doctest::Approx(4.0 * base.grad_learner->flat()[i]).epsilon(1e-13));

  CHECK_THROWS_AS(divergence_loss(LossKind::kHardCe, pair, config), std::invalid_argument);
}
