#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace mergemix {

/// Reproducible generator for the benchmark.
///
/// Raw bits come from std::mt19937_64 seeded through
/// std::seed_seq{seed_lo, seed_hi, stream_lo, stream_hi}; both are fully
/// specified by the standard. The standard distributions are not, so the
/// conversions here are written out:
///   uniform()  = (next() >> 11) * 2^-53
///   normal()   = Box-Muller on two uniforms, the first mapped to (0, 1]
///   below(n)   = rejection sampling on the top bits (unbiased)
///   shuffle    = Fisher-Yates from the back using below()
/// Each independent run (pretraining, one fine-tune, data for one dataset)
/// derives its own stream id from the global seed, so results do not depend
/// on scheduling.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const int shift = std::countl_zero(n - 1);
    for (;;) {
      const std::uint64_t v = next() >> shift;
      if (v < n) return v;
    }
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mergemix
