#pragma once

#include <cstdint>
#include <random>

namespace pargrappa {

// splitmix64-style finalizer; chains (seed, stream, ...) into one engine seed
// so independent streams can be drawn per (series, frame, coil).
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
  return mix_seed(mix_seed(seed) ^ (next + 0x9e3779b97f4a7c15ull), rest...);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(mix_seed(seed)); }

}  // namespace pargrappa
