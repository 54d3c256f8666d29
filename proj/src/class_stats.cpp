#include "gkl/class_stats.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gkl/softmax.hpp"

namespace gkl {

ClassWeightTable::ClassWeightTable(std::size_t num_classes)
    : num_classes_(num_classes),
      rows_(num_classes, num_classes, num_classes ? 1.0 / static_cast<double>(num_classes) : 0.0),
      accum_(num_classes, num_classes, 0.0),
      counts_(num_classes, 0) {
  if (num_classes == 0) throw std::invalid_argument("ClassWeightTable: need at least one class");
}

void ClassWeightTable::check_label(std::size_t label) const {
  if (label >= num_classes_) {
    throw std::invalid_argument("ClassWeightTable: label " + std::to_string(label) +
                                " out of range [0, " + std::to_string(num_classes_) + ")");
  }
}

std::span<const double> ClassWeightTable::row(std::size_t label) const {
  check_label(label);
  return rows_.row(label);
}

void ClassWeightTable::update(const Matrix& logits, std::span<const int> labels, double tau) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("ClassWeightTable::update: logits/labels size mismatch");
  if (logits.cols() != num_classes_)
    throw std::invalid_argument("ClassWeightTable::update: class-count mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("ClassWeightTable::update: tau must be positive");

  std::vector<double> scaled(num_classes_);
  std::vector<double> probs(num_classes_);
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const int label = labels[b];
    if (label < 0) throw std::invalid_argument("ClassWeightTable::update: negative label");
    check_label(static_cast<std::size_t>(label));
    const auto row_logits = logits.row(b);
    for (std::size_t j = 0; j < num_classes_; ++j) scaled[j] = row_logits[j] / tau;
    softmax_into(scaled, probs);
    auto slot = accum_.row(static_cast<std::size_t>(label));
    for (std::size_t j = 0; j < num_classes_; ++j) slot[j] += probs[j];
    ++counts_[static_cast<std::size_t>(label)];
  }
}

void ClassWeightTable::commit_epoch() {
  for (std::size_t y = 0; y < num_classes_; ++y) {
    if (counts_[y] > 0) {
      const double inv = 1.0 / static_cast<double>(counts_[y]);
      auto dst = rows_.row(y);
      auto src = accum_.row(y);
      for (std::size_t j = 0; j < num_classes_; ++j) dst[j] = src[j] * inv;
    }
    auto src = accum_.row(y);
    for (std::size_t j = 0; j < num_classes_; ++j) src[j] = 0.0;
    counts_[y] = 0;
  }
  ++epoch_;
}

std::vector<double> ClassWeightTable::weight_vector(std::size_t label, double gamma) const {
  check_label(label);
  std::vector<double> c(num_classes_);
  const auto r = rows_.row(label);
  if (gamma == 0.0) {
    for (std::size_t j = 0; j < num_classes_; ++j) c[j] = 1.0;
  } else if (gamma == 1.0) {
    for (std::size_t j = 0; j < num_classes_; ++j) c[j] = r[j];
  } else {
    for (std::size_t j = 0; j < num_classes_; ++j) c[j] = std::pow(r[j], gamma);
  }
  return c;
}

double ClassWeightTable::margin(std::size_t label) const {
  check_label(label);
  if (num_classes_ < 2)
    throw std::invalid_argument("ClassWeightTable::margin: needs at least two classes");
  const auto r = rows_.row(label);
  double best_other = -1.0;
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (k == label) continue;
    if (r[k] > best_other) best_other = r[k];
  }
  return r[label] - best_other;
}

void ClassWeightTable::set_active_rows(const Matrix& rows, long epoch) {
  if (rows.rows() != num_classes_ || rows.cols() != num_classes_)
    throw std::invalid_argument("ClassWeightTable::set_active_rows: shape mismatch");
  for (std::size_t y = 0; y < num_classes_; ++y) {
    double sum = 0.0;
    for (double v : rows.row(y)) {
      if (!(v >= 0.0 && v <= 1.0 + 1e-12))
        throw std::invalid_argument("ClassWeightTable::set_active_rows: entry out of [0,1]");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("ClassWeightTable::set_active_rows: row " + std::to_string(y) +
                                  " does not sum to 1");
  }
  rows_ = rows;
  epoch_ = epoch;
}

}  // namespace gkl
