#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ebomlc {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for a named sub-stream, e.g. derive_seed(seed, {kStreamNoise}).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(seed);
  for (std::uint64_t p : path) s = mix_seed(s ^ mix_seed(p + 0x632BE59BD9B4E019ULL));
  return s;
}

// Sub-stream tags.
inline constexpr std::uint64_t kStreamCenters = 1;
inline constexpr std::uint64_t kStreamSamples = 2;
inline constexpr std::uint64_t kStreamSplit = 3;
inline constexpr std::uint64_t kStreamNoise = 4;
inline constexpr std::uint64_t kStreamMainInit = 5;
inline constexpr std::uint64_t kStreamMetaInit = 6;
inline constexpr std::uint64_t kStreamExtractor = 7;
inline constexpr std::uint64_t kStreamNoisyBatches = 8;
inline constexpr std::uint64_t kStreamCleanBatches = 9;
inline constexpr std::uint64_t kStreamTest = 10;
inline constexpr std::uint64_t kStreamToy = 11;

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace ebomlc
