#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace gkl {

/// Deterministic pseudo-random generator keyed by (seed, stream).
///
/// xoshiro256++ with SplitMix64 state expansion, implemented in-repo so that
/// equal (seed, stream) pairs yield bit-identical draws on every platform.
/// Distinct stream ids give statistically independent sequences; concurrent
/// users must own distinct streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal deviate (Marsaglia polar method; second value cached).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace gkl
