#include "gkl/experiment_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gkl/errors.hpp"

namespace gkl {

namespace {

using nlohmann::json;

void require_known_keys(const json& obj, const std::set<std::string>& known,
                        const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError("config error at " + path + "/" + key + ": unknown key");
  }
}

const json& require_key(const json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError("config error: missing key " + path + "/" + key);
  return *it;
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config error at " + path + "/" + key + ": wrong type");
  }
}

template <typename T>
T get_required(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require_key(obj, key, path);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config error at " + path + "/" + key + ": wrong type");
  }
}

WeightMode weight_mode_from_name(const std::string& name, const std::string& path) {
  if (name == "sample_wise") return WeightMode::kSampleWise;
  if (name == "class_wise") return WeightMode::kClassWise;
  throw ConfigError("config error at " + path + ": unknown weight_mode '" + name + "'");
}

LrSchedule schedule_from_name(const std::string& name, const std::string& path) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw ConfigError("config error at " + path + ": unknown schedule '" + name + "'");
}

AttackObjective objective_from_name(const std::string& name, const std::string& path) {
  if (name == "cross_entropy") return AttackObjective::kCrossEntropy;
  if (name == "kl_to_natural") return AttackObjective::kKlToNatural;
  throw ConfigError("config error at " + path + ": unknown objective '" + name + "'");
}

LossConfig parse_loss_block(const json& obj, const std::string& path) {
  require_known_keys(obj, {"alpha", "beta", "gamma", "tau", "weight_mode", "break_asymmetry",
                           "kd_temperature"},
                     path);
  LossConfig c;
  c.alpha = get_or(obj, "alpha", path, c.alpha);
  c.beta = get_or(obj, "beta", path, c.beta);
  c.gamma = get_or(obj, "gamma", path, c.gamma);
  c.tau = get_or(obj, "tau", path, c.tau);
  c.kd_temperature = get_or(obj, "kd_temperature", path, c.kd_temperature);
  c.break_asymmetry = get_or(obj, "break_asymmetry", path, c.break_asymmetry);
  if (obj.contains("weight_mode"))
    c.weight_mode = weight_mode_from_name(obj["weight_mode"].get<std::string>(),
                                          path + "/weight_mode");
  if (c.alpha < 0.0 || c.beta < 0.0)
    throw ConfigError("config error at " + path + ": alpha/beta must be nonnegative");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0))
    throw ConfigError("config error at " + path + ": gamma must be in [0, 1]");
  if (!(c.tau > 0.0)) throw ConfigError("config error at " + path + ": tau must be positive");
  if (!(c.kd_temperature > 0.0))
    throw ConfigError("config error at " + path + ": kd_temperature must be positive");
  return c;
}

TrainConfig parse_train_block(const json& obj, const std::string& path) {
  require_known_keys(obj, {"epochs", "batch_size", "learning_rate", "schedule", "momentum",
                           "weight_decay", "loss", "hard_label_weight", "divergence_weight"},
                     path);
  TrainConfig c;
  c.epochs = get_or<std::size_t>(obj, "epochs", path, c.epochs);
  c.batch_size = get_or<std::size_t>(obj, "batch_size", path, c.batch_size);
  c.learning_rate = get_or(obj, "learning_rate", path, c.learning_rate);
  c.momentum = get_or(obj, "momentum", path, c.momentum);
  c.weight_decay = get_or(obj, "weight_decay", path, c.weight_decay);
  c.hard_label_weight = get_or(obj, "hard_label_weight", path, c.hard_label_weight);
  c.divergence_weight = get_or(obj, "divergence_weight", path, c.divergence_weight);
  if (obj.contains("schedule"))
    c.schedule = schedule_from_name(obj["schedule"].get<std::string>(), path + "/schedule");
  if (obj.contains("loss")) c.loss = loss_kind_from_name(obj["loss"].get<std::string>());
  if (c.epochs == 0 || c.batch_size == 0)
    throw ConfigError("config error at " + path + ": epochs and batch_size must be positive");
  if (c.learning_rate < 0.0 || c.momentum < 0.0 || c.weight_decay < 0.0)
    throw ConfigError("config error at " + path + ": rates must be nonnegative");
  return c;
}

DatasetBlock parse_dataset_block(const json& obj, const std::string& path) {
  DatasetBlock block;
  block.generator = get_required<std::string>(obj, "generator", path);
  if (block.generator == "blobs") {
    require_known_keys(obj, {"generator", "classes", "train_counts", "n_max", "rho",
                             "test_per_class", "radius", "sigma"},
                       path);
    block.classes = get_or<std::size_t>(obj, "classes", path, block.classes);
    block.train_counts =
        get_or<std::vector<std::size_t>>(obj, "train_counts", path, block.train_counts);
    block.n_max = get_or<std::size_t>(obj, "n_max", path, block.n_max);
    block.rho = get_or(obj, "rho", path, block.rho);
    block.test_per_class = get_or<std::size_t>(obj, "test_per_class", path, block.test_per_class);
    block.radius = get_or(obj, "radius", path, block.radius);
    block.sigma = get_or(obj, "sigma", path, block.sigma);
    if (block.train_counts.empty() && block.n_max == 0)
      throw ConfigError("config error at " + path + ": blobs need train_counts or n_max");
    if (!block.train_counts.empty() && block.train_counts.size() != block.classes)
      throw ConfigError("config error at " + path + "/train_counts: size must equal classes");
  } else if (block.generator == "spirals") {
    require_known_keys(obj, {"generator", "per_arm", "noise", "test_per_arm"}, path);
    block.classes = 2;
    block.per_arm = get_or<std::size_t>(obj, "per_arm", path, block.per_arm);
    block.noise = get_or(obj, "noise", path, block.noise);
    block.test_per_arm = get_or<std::size_t>(obj, "test_per_arm", path, block.test_per_arm);
  } else if (block.generator == "idx") {
    require_known_keys(obj, {"generator", "train_images", "train_labels", "test_images",
                             "test_labels"},
                       path);
    block.train_images = get_required<std::string>(obj, "train_images", path);
    block.train_labels = get_required<std::string>(obj, "train_labels", path);
    block.test_images = get_required<std::string>(obj, "test_images", path);
    block.test_labels = get_required<std::string>(obj, "test_labels", path);
  } else {
    throw ConfigError("config error at " + path + "/generator: unknown generator '" +
                      block.generator + "'");
  }
  return block;
}

AttackConfig parse_attack_block(const json& obj, const std::string& path, std::size_t* eval_steps) {
  require_known_keys(obj, {"epsilon", "step_size", "steps", "random_start", "objective",
                           "eval_steps"},
                     path);
  AttackConfig c;
  c.epsilon = get_required<double>(obj, "epsilon", path);
  c.steps = get_or(obj, "steps", path, 10);
  c.step_size = get_or(obj, "step_size", path, c.epsilon > 0.0 ? c.epsilon / 4.0 : 0.01);
  c.random_start = get_or(obj, "random_start", path, true);
  c.objective = AttackObjective::kKlToNatural;
  if (obj.contains("objective"))
    c.objective = objective_from_name(obj["objective"].get<std::string>(), path + "/objective");
  *eval_steps = get_or<std::size_t>(obj, "eval_steps", path, std::size_t{20});
  if (c.epsilon < 0.0) throw ConfigError("config error at " + path + ": epsilon must be >= 0");
  if (c.steps < 1) throw ConfigError("config error at " + path + ": steps must be >= 1");
  if (!(c.step_size > 0.0))
    throw ConfigError("config error at " + path + ": step_size must be > 0");
  return c;
}

json loss_config_to_json(const LossConfig& c) {
  return json{{"alpha", c.alpha},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"weight_mode",
               c.weight_mode == WeightMode::kClassWise ? "class_wise" : "sample_wise"},
              {"break_asymmetry", c.break_asymmetry},
              {"kd_temperature", c.kd_temperature}};
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"schedule", c.schedule == LrSchedule::kCosine ? "cosine" : "constant"},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"loss", loss_kind_name(c.loss)},
              {"hard_label_weight", c.hard_label_weight},
              {"divergence_weight", c.divergence_weight}};
}

}  // namespace

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kHardCe: return "hard_ce";
    case LossKind::kKl: return "kl";
    case LossKind::kDkl: return "dkl";
    case LossKind::kGkl: return "gkl";
    case LossKind::kJsd: return "jsd";
  }
  return "unknown";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "hard_ce") return LossKind::kHardCe;
  if (name == "kl") return LossKind::kKl;
  if (name == "dkl") return LossKind::kDkl;
  if (name == "gkl") return LossKind::kGkl;
  if (name == "jsd") return LossKind::kJsd;
  throw ConfigError("config error: unknown loss '" + name + "'");
}

ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config error: root must be an object");
  require_known_keys(root, {"kind", "dataset", "teacher", "student", "model", "train", "loss",
                            "attack", "seeds", "output_dir"},
                     "");
  ExperimentConfig config;
  config.kind = get_required<std::string>(root, "kind", "");
  if (config.kind != "distill" && config.kind != "advtrain")
    throw ConfigError("config error at /kind: expected 'distill' or 'advtrain'");

  config.dataset = parse_dataset_block(require_key(root, "dataset", ""), "/dataset");
  config.train = parse_train_block(root.contains("train") ? root["train"] : json::object(),
                                   "/train");
  if (root.contains("loss"))
    config.train.loss_config = parse_loss_block(root["loss"], "/loss");

  if (config.kind == "distill") {
    const json& teacher = require_key(root, "teacher", "");
    require_known_keys(teacher, {"layers", "checkpoint", "train"}, "/teacher");
    TeacherBlock block;
    block.layers = get_required<std::vector<std::size_t>>(teacher, "layers", "/teacher");
    block.checkpoint = get_or<std::string>(teacher, "checkpoint", "/teacher", "");
    if (teacher.contains("train"))
      block.train = parse_train_block(teacher["train"], "/teacher/train");
    if (block.checkpoint.empty() && !block.train)
      throw ConfigError("config error: missing key /teacher/checkpoint or /teacher/train");
    config.teacher = std::move(block);
    const json& student = require_key(root, "student", "");
    require_known_keys(student, {"layers"}, "/student");
    config.student = get_required<std::vector<std::size_t>>(student, "layers", "/student");
  } else {
    const json& model = require_key(root, "model", "");
    require_known_keys(model, {"layers"}, "/model");
    config.model = get_required<std::vector<std::size_t>>(model, "layers", "/model");
    config.attack =
        parse_attack_block(require_key(root, "attack", ""), "/attack", &config.eval_steps);
  }

  config.seeds = get_or<std::vector<std::uint64_t>>(root, "seeds", "", config.seeds);
  if (config.seeds.empty()) throw ConfigError("config error at /seeds: need at least one seed");
  config.output_dir = get_or<std::string>(root, "output_dir", "", config.output_dir);
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into line/column for the diagnostic.
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("config parse error in " + path + " at line " + std::to_string(line) +
                      ", column " + std::to_string(column) + ": " + e.what());
  }
  return parse_experiment_config(root);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
  json root;
  root["kind"] = config.kind;
  json dataset{{"generator", config.dataset.generator}};
  if (config.dataset.generator == "blobs") {
    dataset["classes"] = config.dataset.classes;
    if (!config.dataset.train_counts.empty())
      dataset["train_counts"] = config.dataset.train_counts;
    if (config.dataset.n_max > 0) {
      dataset["n_max"] = config.dataset.n_max;
      dataset["rho"] = config.dataset.rho;
    }
    dataset["test_per_class"] = config.dataset.test_per_class;
    dataset["radius"] = config.dataset.radius;
    dataset["sigma"] = config.dataset.sigma;
  } else if (config.dataset.generator == "spirals") {
    dataset["per_arm"] = config.dataset.per_arm;
    dataset["noise"] = config.dataset.noise;
    dataset["test_per_arm"] = config.dataset.test_per_arm;
  } else {
    dataset["train_images"] = config.dataset.train_images;
    dataset["train_labels"] = config.dataset.train_labels;
    dataset["test_images"] = config.dataset.test_images;
    dataset["test_labels"] = config.dataset.test_labels;
  }
  root["dataset"] = dataset;

  if (config.teacher) {
    json teacher{{"layers", config.teacher->layers}};
    if (!config.teacher->checkpoint.empty()) teacher["checkpoint"] = config.teacher->checkpoint;
    if (config.teacher->train) teacher["train"] = train_config_to_json(*config.teacher->train);
    root["teacher"] = teacher;
  }
  if (config.student) root["student"] = json{{"layers", *config.student}};
  if (config.model) root["model"] = json{{"layers", *config.model}};
  root["train"] = train_config_to_json(config.train);
  root["loss"] = loss_config_to_json(config.train.loss_config);
  if (config.kind == "advtrain") {
    root["attack"] = json{
        {"epsilon", config.attack.epsilon},
        {"step_size", config.attack.step_size},
        {"steps", config.attack.steps},
        {"random_start", config.attack.random_start},
        {"objective", config.attack.objective == AttackObjective::kCrossEntropy
                          ? "cross_entropy"
                          : "kl_to_natural"},
        {"eval_steps", config.eval_steps}};
  }
  root["seeds"] = config.seeds;
  root["output_dir"] = config.output_dir;
  return root;
}

AttackConfig evaluation_attack(const ExperimentConfig& config) {
  AttackConfig eval = config.attack;
  eval.steps = static_cast<int>(config.eval_steps);
  eval.random_start = false;
  eval.objective = AttackObjective::kCrossEntropy;
  return eval;
}

std::pair<LabeledDataset, LabeledDataset> build_datasets(const DatasetBlock& block,
                                                         std::uint64_t seed) {
  // Streams 10/11 keep the draws disjoint from the training streams.
  Rng train_rng(seed, 10);
  Rng test_rng(seed, 11);
  if (block.generator == "blobs") {
    std::vector<std::size_t> counts = block.train_counts;
    if (counts.empty()) counts = long_tail_counts(block.classes, block.n_max, block.rho);
    const std::vector<std::size_t> test_counts(block.classes, block.test_per_class);
    return {make_blobs(train_rng, block.classes, counts, block.radius, block.sigma),
            make_blobs(test_rng, block.classes, test_counts, block.radius, block.sigma)};
  }
  if (block.generator == "spirals") {
    return {make_spirals(train_rng, block.per_arm, block.noise),
            make_spirals(test_rng, block.test_per_arm, block.noise)};
  }
  return {load_idx(block.train_images, block.train_labels),
          load_idx(block.test_images, block.test_labels)};
}

}  // namespace gkl
