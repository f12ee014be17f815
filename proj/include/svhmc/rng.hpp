#pragma once

#include <cstdint>
#include <random>

namespace svhmc {

using Rng = std::mt19937_64;

/// Random stream keyed by a master seed and a stream path (chain,
/// replication, ...). Distinct paths give statistically independent streams
/// via seed_seq mixing of the full 64-bit words.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream = 0,
                       std::uint64_t substream = 0) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed),   hi(seed),      lo(stream), hi(stream),
                    lo(substream), hi(substream), 0x5f1a7c3du};
  return Rng(seq);
}

/// SplitMix64 finalizer over (seed, a, b); used to give replications their
/// own master seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double std_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace svhmc
