#pragma once

#include <cmath>
#include <cstdint>

namespace terramesh {

// Small self-contained PRNG (splitmix64 core). Used instead of <random>
// distributions so that every pipeline stage is bit-reproducible for a given
// seed regardless of the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and keeps the stream simple.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller (one value per call, no cached spare, so
  // the stream position is a pure function of the call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream from a base seed and a stream tag. Used to
// give e.g. every (scene, step) pair its own sampler without correlation.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  Rng r(base ^ (0x517cc1b727220a95ULL * (tag + 1)));
  return r.next_u64();
}

}  // namespace terramesh
