#pragma once

#include <cstdint>

namespace cavmpc {

// Small deterministic generator (splitmix64). Everything that randomizes a
// scenario draws from this so that a seed maps to bit-identical results on
// any platform; the standard distributions are avoided on purpose since
// their output is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

/// Independent stream seed for (base seed, stream index). Used to give every
/// simulated driver its own parameter draw that does not shift when the
/// platoon size changes.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 g(base ^ (0xA0761D6478BD642FULL * (stream + 1)));
  g.next();
  return g.next();
}

}  // namespace cavmpc
