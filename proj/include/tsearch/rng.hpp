#pragma once

// Small portable PRNG so seeded runs produce identical bytes on every
// platform (std:: distributions are implementation-defined).

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace tsearch {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    // Reject the low range so the modulo is unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

/// Order-dependent mix of several words into one seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (auto w : words) {
    SplitMix64 g(h ^ w);
    h = g.next();
  }
  return h;
}

}  // namespace tsearch
