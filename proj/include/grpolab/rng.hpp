#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace grpolab {

// Every sampling site draws from its own engine derived from (seed, key...),
// so results do not depend on evaluation order or thread layout.

namespace stream {
inline constexpr std::uint64_t kRollout = 1;
inline constexpr std::uint64_t kReward = 2;
inline constexpr std::uint64_t kPrompt = 3;
inline constexpr std::uint64_t kEval = 4;
inline constexpr std::uint64_t kLabel = 5;
inline constexpr std::uint64_t kMc = 6;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> key) {
  std::uint64_t state = seed;
  std::uint64_t h = splitmix64(state);
  for (std::uint64_t k : key) {
    state ^= h + k;
    h = splitmix64(state);
  }
  return h;
}

inline std::mt19937_64 derive_rng(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> key) {
  return std::mt19937_64{derive_seed(seed, key)};
}

// Uniform double in [0,1) from the top 53 bits of the engine output.
// std::uniform_real_distribution is implementation-defined; this is not.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace grpolab
