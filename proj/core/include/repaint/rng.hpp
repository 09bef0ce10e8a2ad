#pragma once

#include <cstdint>
#include <random>

namespace repaint {

// Deterministic random source. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard), but all value transforms are done by
// hand because the std::*_distribution algorithms are implementation-defined
// and would break run-to-run reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Independent substream derived by hashing the parent seed with stream ids.
  // Streams with distinct id tuples are uncorrelated for practical purposes.
  static Rng substream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] via rejection-free Lemire-style reduction.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Standard normal via Box-Muller (no cached spare: one draw = two u64s,
  // so the stream position is data-independent).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 eng_;
};

// splitmix64 finalizer; used for seed mixing and config hashing.
uint64_t mix64(uint64_t x);

}  // namespace repaint
