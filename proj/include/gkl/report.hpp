#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gkl/pipeline.hpp"

namespace gkl {

/// Result serialization: one JSON file with everything, plus a CSV metrics
/// file (columns epoch, train_loss, clean_acc; the last epoch's row also
/// carries the many/medium/few group accuracies). Both are parseable by the
/// readers below, which the round-trip tests use.

nlohmann::json result_to_json(const ExperimentResult& result);
ExperimentResult result_from_json(const nlohmann::json& root);

void write_result_json(const std::string& path, const ExperimentResult& result);
ExperimentResult read_result_json(const std::string& path);

struct CsvMetrics {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;  // empty cell = nullopt
};

void write_metrics_csv(const std::string& path, const ExperimentResult& result);
CsvMetrics read_metrics_csv(const std::string& path);

}  // namespace gkl
