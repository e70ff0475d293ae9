#pragma once

#include <cmath>
#include <cstdint>

namespace meshfit {

// Deterministic splitmix64 generator. std::mt19937 plus the standard
// distributions are not guaranteed to produce the same stream across
// library versions; everything seed-dependent in this project goes
// through this class so outputs stay reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal, Box-Muller. One draw consumes exactly two uniforms so
  // the stream position is predictable.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }

  // Index in [0, n). n must be > 0.
  uint64_t index(uint64_t n) {
    uint64_t i = uint64_t(uniform() * double(n));
    return i < n ? i : n - 1;
  }

 private:
  uint64_t state_;
};

// Independent substream for (seed, id) pairs, e.g. per-step sampling seeds.
inline uint64_t derive_seed(uint64_t seed, uint64_t id) {
  Rng r(seed ^ (0x632be59bd9b4e019ull * (id + 1)));
  r.next_u64();
  return r.next_u64();
}

}  // namespace meshfit
