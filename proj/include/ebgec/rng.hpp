#pragma once

#include <cstdint>
#include <random>

namespace ebgec {

// Portable helpers on top of mt19937_64. The standard distributions are
// implementation-defined, which would make corpora and checkpoints differ
// between standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(seed ^ splitmix64(stream + 0x51ED2701ULL)));
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return n == 0 ? 0 : static_cast<std::size_t>(rng() % n);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(first[i - 1], first[uniform_index(rng, i)]);
  }
}

}  // namespace ebgec
