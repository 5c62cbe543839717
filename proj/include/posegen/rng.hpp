#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace posegen::rng {

/// FNV-1a over bytes; used to derive per-item seeds from (seed, label) so
/// dataset synthesis stays reproducible independent of std::hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  std::uint64_t h = fnv1a(label);
  h ^= base + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

using Engine = std::mt19937_64;

inline double uniform(Engine& eng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(eng);
}

inline double normal(Engine& eng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(eng);
}

inline int uniform_int(Engine& eng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(eng);
}

}  // namespace posegen::rng
