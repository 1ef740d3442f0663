#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace sdplm {

// All randomness in the toolkit flows from one root seed, split per
// component by label so that adding draws to one stream never perturbs
// another.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic sub-seed for a named component of a run.
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
  return splitmix64(root ^ fnv1a64(label));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller. Draws are stateless across calls: each
  // pair of outputs consumes exactly two uniforms, so fill order is
  // reproducible from the seed alone.
  void gaussian_fill(std::span<double> out) {
    size_t i = 0;
    while (i < out.size()) {
      const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 6.283185307179586476925286766559 * u2;
      out[i++] = r * std::cos(a);
      if (i < out.size()) out[i++] = r * std::sin(a);
    }
  }

  double gaussian() {
    double v;
    gaussian_fill({&v, 1});
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sdplm
