#pragma once

#include <cstdint>
#include <random>

namespace topo {

/// splitmix64 step; used for deriving independent seeds from a master seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic random source. std::mt19937_64 is bit-exact across
/// platforms; the distribution helpers below are hand-rolled because the
/// standard <random> distributions are not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Seed for the i-th derived stream of a master seed.
  static uint64_t derive(uint64_t master, uint64_t i) {
    return splitmix64(master + 0x9E3779B97F4A7C15ULL * (i + 1));
  }

  uint64_t next() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive, without modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
    uint64_t bound = (UINT64_MAX / span) * span;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= bound);
    return lo + static_cast<int64_t>(x % span);
  }

  /// Bernoulli draw.
  bool flip(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace topo
