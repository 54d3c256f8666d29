#pragma once

#include <span>
#include <string>
#include <vector>

#include "gkl/matrix.hpp"
#include "gkl/rng.hpp"

namespace gkl {

/// Immutable labelled dataset: N x D inputs, labels in [0, num_classes), and
/// the per-coordinate domain box attacks project into. Synthetic generators
/// use [-10, 10] (effectively unconstrained); image data uses [0, 1].
struct LabeledDataset {
  Matrix inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  double box_lo = -10.0;
  double box_hi = 10.0;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
};

/// Gaussian blobs with class means equally spaced on a circle: mean of class y
/// is radius * (cos a, sin a) with a = 2*pi*y / classes, samples mean +
/// sigma * Normal(0, I). counts[y] samples are drawn for class y, in class
/// order. Deterministic per generator state.
LabeledDataset make_blobs(Rng& rng, std::size_t classes, std::span<const std::size_t> counts,
                          double radius, double sigma);

/// Exponentially imbalanced counts: class y gets round(n_max * rho^(y/(C-1))).
std::vector<std::size_t> long_tail_counts(std::size_t classes, std::size_t n_max, double rho);

/// Two interleaved spiral arms, one class per arm. Arm a uses the parametric
/// curve r(t) = t / (3*pi), angle(t) = t + a*pi for t evenly spaced in
/// [pi/2, 3*pi], scaled by 4; per_arm points per class plus Gaussian noise of
/// the given scale on both coordinates.
LabeledDataset make_spirals(Rng& rng, std::size_t per_arm, double noise);

/// Parses the IDX image/label pair: big-endian u32 magic (0x00000803 for 3-D
/// u8 image tensors, 0x00000801 for 1-D u8 labels), big-endian u32 dimension
/// sizes, then the raw payload. Pixels are scaled to [0, 1] doubles by / 255
/// and images flattened row-major to D = H * W. Throws IoError with a
/// distinct message for a bad magic, a truncated payload, or an image/label
/// count mismatch.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace gkl
