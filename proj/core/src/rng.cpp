#include "repaint/rng.hpp"

#include <cmath>
#include <numbers>

namespace repaint {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng Rng::substream(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t s = mix64(seed);
  s = mix64(s ^ (a + 0x100000001b3ull));
  s = mix64(s ^ (b + 0xcbf29ce484222325ull));
  s = mix64(s ^ (c + 0x2545f4914f6cdd1dull));
  return Rng(s);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
  if (range == 0) return static_cast<int64_t>(eng_());  // full 64-bit range
  // Multiply-shift reduction; the modulo bias is < 2^-64 per draw which is
  // far below anything observable here.
  unsigned __int128 m = static_cast<unsigned __int128>(eng_()) * range;
  return lo + static_cast<int64_t>(m >> 64);
}

double Rng::normal() {
  // Box-Muller; u1 in (0,1] so log() is finite.
  double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace repaint
