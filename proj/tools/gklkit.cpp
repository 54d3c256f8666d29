// gklkit: verification suites and desk-scale distillation / adversarial
// training experiments for the decoupled divergence-loss family.
//
// Exit statuses: 0 success, 1 verification/assertion failure,
// 2 configuration error, 3 I/O error.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gkl/checkpoint.hpp"
#include "gkl/errors.hpp"
#include "gkl/experiment_config.hpp"
#include "gkl/report.hpp"
#include "gkl/verify.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gkl;

unsigned seed_parallelism() {
  const char* env = std::getenv("GKLKIT_THREADS");
  if (!env) return 1;
  const long value = std::strtol(env, nullptr, 10);
  return value > 0 ? static_cast<unsigned>(value) : 1;
}

int run_verify(std::uint64_t seed, int trials, bool inject_wrong_sign) {
  VerifyOptions options;
  options.seed = seed;
  if (trials > 0) {
    options.theorem_trials = trials;
    options.fd_trials = trials;
    options.kernel_trials = trials;
    options.stop_gradient_trials = trials;
  }
  options.inject_wrong_sign = inject_wrong_sign;
  const std::vector<SuiteReport> reports = run_all_verification_suites(options);
  print_suite_reports(std::cout, reports);
  if (!all_suites_pass(reports)) {
    for (const auto& suite : reports)
      for (const auto& check : suite.checks)
        if (!check.pass)
          std::cerr << "verification failed: " << suite.suite << " / " << check.name << " ("
                    << check.side << ")\n";
    return 1;
  }
  std::cout << "all verification suites passed\n";
  return 0;
}

MlpModel obtain_teacher(const ExperimentConfig& config, const LabeledDataset& train,
                        std::uint64_t seed, const fs::path& out_dir) {
  const TeacherBlock& block = *config.teacher;
  if (!block.checkpoint.empty()) return load_checkpoint(block.checkpoint).model;
  TrainConfig teacher_config = *block.train;
  teacher_config.loss = LossKind::kHardCe;
  // Distinct seed so a student with identical layer sizes never starts as a
  // copy of its teacher.
  teacher_config.seed = seed ^ 0x7465616368ULL;
  MlpModel teacher = train_classifier(block.layers, train, teacher_config);
  save_checkpoint((out_dir / ("teacher_seed" + std::to_string(seed) + ".checkpoint.json")).string(),
                  teacher);
  return teacher;
}

void run_single_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& out_dir) {
  auto [train_data, test_data] = build_datasets(config.dataset, seed);
  TrainConfig train_config = config.train;
  train_config.seed = seed;

  const std::string tag = config.kind + "_" + loss_kind_name(train_config.loss) + "_seed" +
                          std::to_string(seed);
  ExperimentResult result;
  MlpModel trained;
  ClassWeightTable table(train_data.num_classes);
  if (config.kind == "distill") {
    const MlpModel teacher = obtain_teacher(config, train_data, seed, out_dir);
    result = distill(teacher, *config.student, train_data, test_data, train_config, &trained,
                     &table);
  } else {
    result = adversarial_train(*config.model, train_data, test_data, train_config, config.attack,
                               evaluation_attack(config), &trained, &table);
  }
  write_result_json((out_dir / (tag + ".result.json")).string(), result);
  write_metrics_csv((out_dir / (tag + ".metrics.csv")).string(), result);
  const std::string model_name = config.kind == "distill" ? "student" : "model";
  save_checkpoint(
      (out_dir / (model_name + "_seed" + std::to_string(seed) + ".checkpoint.json")).string(),
      trained, &table, experiment_config_to_json(config));
}

int run_experiments(const std::string& config_path, const std::string& out_override,
                    std::int64_t seed_override, const char* expected_kind) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (config.kind != expected_kind)
    throw ConfigError(std::string("config error at /kind: expected '") + expected_kind +
                      "' for this subcommand, got '" + config.kind + "'");
  if (!out_override.empty()) config.output_dir = out_override;
  if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};

  const fs::path out_dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());

  const unsigned thread_budget =
      std::min<unsigned>(seed_parallelism(), static_cast<unsigned>(config.seeds.size()));
  if (thread_budget <= 1) {
    for (std::uint64_t seed : config.seeds) run_single_seed(config, seed, out_dir);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < thread_budget; ++w) {
      workers.emplace_back([&]() {
        for (;;) {
          const std::size_t index = next.fetch_add(1);
          if (index >= config.seeds.size()) return;
          try {
            run_single_seed(config, config.seeds[index], out_dir);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
    if (failure) std::rethrow_exception(failure);
  }
  std::cout << "wrote " << config.seeds.size() << " seed result(s) to " << out_dir.string()
            << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& config_path) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  const ExperimentConfig config = load_experiment_config(config_path);
  const std::uint64_t seed = config.seeds.front();
  auto [train_data, test_data] = build_datasets(config.dataset, seed);
  Rng eval_rng(seed, 4);
  ExperimentResult result;
  if (config.kind == "advtrain") {
    const AttackConfig attack = evaluation_attack(config);
    result = evaluate(ckpt.model, test_data, &attack, eval_rng, train_data.class_counts());
  } else {
    result = evaluate(ckpt.model, test_data, nullptr, eval_rng, train_data.class_counts());
  }
  std::cout << result_to_json(result).dump(2) << "\n";
  return 0;
}

int run_margins(const std::string& model_path, const std::string& config_path) {
  const Checkpoint ckpt = load_checkpoint(model_path);
  std::vector<double> margins;
  std::vector<double> true_scores;
  if (!config_path.empty()) {
    const ExperimentConfig config = load_experiment_config(config_path);
    const std::uint64_t seed = config.seeds.front();
    auto [train_data, test_data] = build_datasets(config.dataset, seed);
    Rng rng(seed, 4);
    const ExperimentResult result = evaluate(ckpt.model, test_data, nullptr, rng);
    margins = result.per_class_margin;
    true_scores = result.per_class_true_score;
  } else if (ckpt.class_table_rows) {
    const std::size_t classes = ckpt.class_table_rows->rows();
    ClassWeightTable table(classes);
    table.set_active_rows(*ckpt.class_table_rows, ckpt.class_table_epoch);
    for (std::size_t y = 0; y < classes; ++y) {
      margins.push_back(table.margin(y));
      true_scores.push_back((*ckpt.class_table_rows)(y, y));
    }
  } else {
    throw ConfigError(
        "margins: the checkpoint has no class statistics; pass --config with a dataset block");
  }
  std::size_t positive = 0;
  for (std::size_t y = 0; y < margins.size(); ++y) {
    std::printf("class %3zu  margin % .6f  mean_true_score %.6f\n", y, margins[y],
                true_scores[y]);
    if (margins[y] > 0.0) ++positive;
  }
  std::printf("positive margins: %zu/%zu\n", positive, margins.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gklkit: divergence losses with analytic gradients, gradient verification "
      "suites, and desk-scale distillation / adversarial-training experiments"};
  app.require_subcommand(1);

  std::uint64_t verify_seed = 7041;
  int verify_trials = 0;
  bool inject_wrong_sign = false;
  CLI::App* verify = app.add_subcommand("verify", "run the gradient verification suites");
  verify->add_option("--seed", verify_seed, "suite seed");
  verify->add_option("--trials", verify_trials, "override the per-case trial counts");
  verify->add_flag("--inject-wrong-sign", inject_wrong_sign,
                   "harness self-test: flip one analytic gradient and expect failure");

  std::string config_path, out_dir, model_path;
  std::int64_t seed_override = -1;

  CLI::App* distill_cmd = app.add_subcommand("distill", "run knowledge-distillation seeds");
  distill_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  distill_cmd->add_option("--out", out_dir, "override the output directory");
  distill_cmd->add_option("--seed", seed_override, "run a single seed instead of the config list");

  CLI::App* advtrain_cmd = app.add_subcommand("advtrain", "run adversarial-training seeds");
  advtrain_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  advtrain_cmd->add_option("--out", out_dir, "override the output directory");
  advtrain_cmd->add_option("--seed", seed_override,
                           "run a single seed instead of the config list");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a config's dataset");
  eval_cmd->add_option("--model", model_path, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--config", config_path, "experiment config providing the dataset")
      ->required();

  CLI::App* margins_cmd =
      app.add_subcommand("margins", "per-class boundary margins and mean true-class scores");
  margins_cmd->add_option("--model", model_path, "checkpoint to inspect")->required();
  margins_cmd->add_option("--config", config_path,
                          "config whose dataset block to evaluate on (otherwise the "
                          "checkpoint's stored class statistics are used)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) return run_verify(verify_seed, verify_trials, inject_wrong_sign);
    if (distill_cmd->parsed()) return run_experiments(config_path, out_dir, seed_override, "distill");
    if (advtrain_cmd->parsed())
      return run_experiments(config_path, out_dir, seed_override, "advtrain");
    if (eval_cmd->parsed()) return run_eval(model_path, config_path);
    if (margins_cmd->parsed()) return run_margins(model_path, config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
