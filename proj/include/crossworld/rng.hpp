#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace crossworld {

using Engine = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Child seed for a named stream (and optional index) below a parent seed.
// Every random draw in the library goes through this so results depend only
// on the master seed, never on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(parent ^ hash_tag(tag)) + index);
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Uniform in the open interval (0, 1), built from 53 random bits.
inline double uniform_open(Engine& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace crossworld
