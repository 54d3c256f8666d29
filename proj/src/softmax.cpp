#include "gkl/softmax.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gkl {

namespace {

void check_input(std::span<const double> logits, const char* op) {
  if (logits.empty()) throw std::invalid_argument(std::string(op) + ": empty input");
  const std::size_t bad = first_non_finite(logits);
  if (bad != static_cast<std::size_t>(-1)) {
    throw std::invalid_argument(std::string(op) + ": non-finite input at index " +
                                std::to_string(bad));
  }
}

double row_max(std::span<const double> v) {
  double m = v[0];
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > m) m = v[i];
  return m;
}

}  // namespace

void softmax_into(std::span<const double> logits, std::span<double> out) {
  check_input(logits, "softmax");
  const double m = row_max(logits);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

void log_softmax_into(std::span<const double> logits, std::span<double> out) {
  check_input(logits, "log_softmax");
  const double m = row_max(logits);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - m);
  const double log_sum = std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - m - log_sum;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  log_softmax_into(logits, out);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < logits.rows(); ++b) softmax_into(logits.row(b), out.row(b));
  return out;
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < logits.rows(); ++b) log_softmax_into(logits.row(b), out.row(b));
  return out;
}

Matrix pairwise_diff(std::span<const double> v) {
  check_input(v, "pairwise_diff");
  const std::size_t n = v.size();
  Matrix out(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) out(j, k) = v[j] - v[k];
  return out;
}

double safe_log(double p) { return std::log(p < 1e-300 ? 1e-300 : p); }

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * safe_log(p);
  return h;
}

}  // namespace gkl
