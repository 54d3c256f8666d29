#include "gkl/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gkl/errors.hpp"

namespace gkl {

namespace {

using nlohmann::json;

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

json result_to_json(const ExperimentResult& result) {
  json root;
  root["seed"] = result.seed;
  root["epoch_train_loss"] = result.epoch_train_loss;
  root["epoch_clean_acc"] = result.epoch_clean_acc;
  root["clean_accuracy"] = result.clean_accuracy;
  root["robust_accuracy"] = optional_to_json(result.robust_accuracy);
  root["per_class_accuracy"] = result.per_class_accuracy;
  root["per_class_margin"] = result.per_class_margin;
  root["per_class_true_score"] = result.per_class_true_score;
  root["groups"] = json{{"many", result.groups.many},
                        {"medium", result.groups.medium},
                        {"few", result.groups.few}};
  root["many_accuracy"] = optional_to_json(result.many_accuracy);
  root["medium_accuracy"] = optional_to_json(result.medium_accuracy);
  root["few_accuracy"] = optional_to_json(result.few_accuracy);
  root["wall_seconds"] = result.wall_seconds;
  return root;
}

ExperimentResult result_from_json(const json& root) {
  ExperimentResult result;
  result.seed = root.at("seed").get<std::uint64_t>();
  result.epoch_train_loss = root.at("epoch_train_loss").get<std::vector<double>>();
  result.epoch_clean_acc = root.at("epoch_clean_acc").get<std::vector<double>>();
  result.clean_accuracy = root.at("clean_accuracy").get<double>();
  result.robust_accuracy = optional_from_json(root.at("robust_accuracy"));
  result.per_class_accuracy = root.at("per_class_accuracy").get<std::vector<double>>();
  result.per_class_margin = root.at("per_class_margin").get<std::vector<double>>();
  result.per_class_true_score = root.at("per_class_true_score").get<std::vector<double>>();
  result.groups.many = root.at("groups").at("many").get<std::vector<std::size_t>>();
  result.groups.medium = root.at("groups").at("medium").get<std::vector<std::size_t>>();
  result.groups.few = root.at("groups").at("few").get<std::vector<std::size_t>>();
  result.many_accuracy = optional_from_json(root.at("many_accuracy"));
  result.medium_accuracy = optional_from_json(root.at("medium_accuracy"));
  result.few_accuracy = optional_from_json(root.at("few_accuracy"));
  result.wall_seconds = root.at("wall_seconds").get<double>();
  return result;
}

void write_result_json(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open result file for writing: " + path);
  out << result_to_json(result).dump(2) << '\n';
  if (!out) throw IoError("failed writing result file: " + path);
}

ExperimentResult read_result_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open result file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("result parse error in " + path + ": " + e.what());
  }
  try {
    return result_from_json(root);
  } catch (const json::exception& e) {
    throw IoError("result: malformed content in " + path + ": " + e.what());
  }
}

void write_metrics_csv(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open metrics file for writing: " + path);
  out << "epoch,train_loss,clean_acc,many_acc,medium_acc,few_acc\n";
  for (std::size_t e = 0; e < result.epoch_train_loss.size(); ++e) {
    out << e << ',' << format_double(result.epoch_train_loss[e]) << ','
        << format_double(result.epoch_clean_acc[e]);
    const bool final_row = e + 1 == result.epoch_train_loss.size();
    for (const auto& group :
         {result.many_accuracy, result.medium_accuracy, result.few_accuracy}) {
      out << ',';
      if (final_row && group) out << format_double(*group);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing metrics file: " + path);
}

CsvMetrics read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  CsvMetrics metrics;
  std::string line;
  if (!std::getline(in, line)) throw IoError("metrics file is empty: " + path);
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) metrics.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::optional<double>> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ','))
      row.push_back(field.empty() ? std::nullopt : std::optional<double>(std::stod(field)));
    // A trailing empty cell is dropped by getline; restore it.
    while (row.size() < metrics.header.size()) row.push_back(std::nullopt);
    metrics.rows.push_back(std::move(row));
  }
  return metrics;
}

}  // namespace gkl
