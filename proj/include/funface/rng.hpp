#pragma once

#include <cstdint>
#include <random>

namespace funface {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent seed from (seed, stream, counter) so every random
/// draw in the pipeline can be addressed without sequential state.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t counter = 0) {
  return mix64(mix64(mix64(seed) ^ stream) ^ counter);
}

/// Named streams, so different consumers of one seed never overlap.
namespace streams {
inline constexpr std::uint64_t kIdentityPrototypes = 1;
inline constexpr std::uint64_t kSamples = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kEncoderInit = 5;
inline constexpr std::uint64_t kClassCenterInit = 6;
inline constexpr std::uint64_t kBenchmark = 7;
}  // namespace streams

using Engine = std::mt19937_64;

inline Engine keyed_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return Engine(derive_seed(seed, stream, counter));
}

}  // namespace funface
