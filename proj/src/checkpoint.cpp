#include "gkl/checkpoint.hpp"

#include <fstream>

#include "gkl/errors.hpp"

namespace gkl {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (double v : m.row(r)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array())
    throw IoError("checkpoint: malformed " + what);
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (rows[r].size() != m.cols()) throw IoError("checkpoint: ragged " + what);
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const ClassWeightTable* table, const nlohmann::json& config_echo) {
  json root;
  root["format_version"] = 1;
  root["layer_sizes"] = model.layer_sizes();
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    weights.push_back(matrix_to_json(model.weight(l)));
    biases.push_back(model.bias(l));
  }
  root["weights"] = std::move(weights);
  root["biases"] = std::move(biases);
  if (table) {
    root["class_table"] =
        json{{"rows", matrix_to_json(table->active_rows())}, {"epoch", table->epoch()}};
  }
  if (!config_echo.is_null()) root["config"] = config_echo;

  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << root.dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint parse error in " + path + ": " + e.what());
  }
  try {
    Checkpoint ckpt;
    ckpt.format_version = root.at("format_version").get<int>();
    if (ckpt.format_version != 1)
      throw IoError("checkpoint: unsupported format_version in " + path);
    const auto layer_sizes = root.at("layer_sizes").get<std::vector<std::size_t>>();
    ckpt.model = MlpModel::zeros(layer_sizes);
    const json& weights = root.at("weights");
    const json& biases = root.at("biases");
    if (weights.size() != ckpt.model.num_layers() || biases.size() != ckpt.model.num_layers())
      throw IoError("checkpoint: layer count mismatch in " + path);
    for (std::size_t l = 0; l < ckpt.model.num_layers(); ++l) {
      Matrix w = matrix_from_json(weights[l], "weights");
      if (!w.same_shape(ckpt.model.weight(l)))
        throw IoError("checkpoint: weight shape mismatch in " + path);
      ckpt.model.weight(l) = std::move(w);
      const auto b = biases[l].get<std::vector<double>>();
      if (b.size() != ckpt.model.bias(l).size())
        throw IoError("checkpoint: bias shape mismatch in " + path);
      ckpt.model.bias(l) = b;
    }
    if (root.contains("class_table")) {
      ckpt.class_table_rows = matrix_from_json(root["class_table"].at("rows"), "class_table");
      ckpt.class_table_epoch = root["class_table"].at("epoch").get<long>();
    }
    if (root.contains("config")) ckpt.config_echo = root["config"];
    return ckpt;
  } catch (const json::exception& e) {
    throw IoError("checkpoint: malformed content in " + path + ": " + e.what());
  }
}

}  // namespace gkl
