#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace lp {

// Deterministic per-purpose sub-seed derivation (splitmix64 finalizer), so
// independent random streams (init, sampling, shuffling) never collide.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Shortest round-trippable decimal representation of a double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace lp
