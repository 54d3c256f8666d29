#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gkl/matrix.hpp"

namespace gkl {

/// Per-class mean probability vectors with an accumulate/commit epoch cycle.
///
/// Row y of the active table is the mean of softmax(logits / tau) over the
/// samples labelled y seen during the previous epoch. Rows for classes never
/// observed stay at the uniform vector 1/C. Updates land in accumulators and
/// become active only at commit_epoch(), so readers between updates always see
/// a consistent table. The derived per-class weight vectors drive the smoothed
/// class-wise loss weights, and the boundary margin summarizes how separated a
/// class's mean prediction is.
class ClassWeightTable {
 public:
  explicit ClassWeightTable(std::size_t num_classes);

  std::size_t num_classes() const { return num_classes_; }
  long epoch() const { return epoch_; }

  /// Active mean probability row for a class (uniform until first commit).
  std::span<const double> row(std::size_t label) const;

  /// Accumulate softmax(logits_b / tau) into each sample's label slot.
  /// Active rows are unchanged until commit_epoch().
  void update(const Matrix& logits, std::span<const int> labels, double tau);

  /// Promote accumulator means to the active table for classes with at least
  /// one sample this epoch; other rows keep their previous value. Resets the
  /// accumulators and advances the epoch index.
  void commit_epoch();

  /// Weight coefficients c_j = row[j]^gamma, entries in [0, 1]. gamma = 0
  /// gives all-ones (uniform pairwise weights); gamma = 1 returns the row
  /// itself. Weights are constants during differentiation.
  std::vector<double> weight_vector(std::size_t label, double gamma) const;

  /// Boundary margin row[y] - max_{k != y} row[k], in [-1, 1]. Equals 1 only
  /// for a one-hot row; 0 for the uniform row.
  double margin(std::size_t label) const;

  std::span<const long> pending_counts() const { return counts_; }

  // Checkpoint access. set_active_rows validates shape and row sums.
  const Matrix& active_rows() const { return rows_; }
  void set_active_rows(const Matrix& rows, long epoch);

 private:
  void check_label(std::size_t label) const;

  std::size_t num_classes_ = 0;
  Matrix rows_;    // C x C active means; row y is the class-y mean vector
  Matrix accum_;   // C x C accumulators for the in-progress epoch
  std::vector<long> counts_;
  long epoch_ = 0;
};

}  // namespace gkl
