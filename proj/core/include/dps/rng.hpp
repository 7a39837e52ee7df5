#pragma once

#include <cstdint>
#include <random>

namespace dps {

/// Seeded generator whose derived draws are identical across standard libraries.
/// std::mt19937_64 output is fully specified; the distribution adaptors are not,
/// so uniform/normal/below are implemented here on top of the raw stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Derives an independent child seed for a named sub-stream.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dps
