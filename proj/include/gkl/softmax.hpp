#pragma once

#include <span>
#include <vector>

#include "gkl/matrix.hpp"

namespace gkl {

/// Numerically stable softmax/log-softmax and pairwise logit differences.
///
/// softmax subtracts the row maximum before exponentiating, so no intermediate
/// overflows for any finite input; log_softmax evaluates x - max - log(sum)
/// directly and never produces -inf for entries whose probability merely
/// underflows. Sums run left-to-right, no reassociation.

/// Probabilities for one logit vector. Entries are strictly positive and sum
/// to 1 within 1e-12. Throws std::invalid_argument on empty or non-finite
/// input, naming the offending index.
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// log(softmax(logits)) entrywise, computed without forming the probabilities.
/// Shift-invariant: log_softmax(v + c) == log_softmax(v).
std::vector<double> log_softmax(std::span<const double> logits);
void log_softmax_into(std::span<const double> logits, std::span<double> out);

/// Row-wise softmax / log-softmax of a batch of logit rows.
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

/// C x C matrix of differences result[j][k] = v[j] - v[k]. Antisymmetric with
/// an exactly zero diagonal.
Matrix pairwise_diff(std::span<const double> v);

/// log with the argument clamped at 1e-300, so probabilities that underflow
/// (logit gaps beyond roughly 690) give a large negative value instead of -inf.
double safe_log(double p);

/// Shannon entropy -sum p log p of a probability vector (0 log 0 := 0).
double entropy(std::span<const double> probs);

}  // namespace gkl
