#pragma once
// Named random streams derived from one root seed.

#include <cstdint>
#include <random>
#include <string_view>

namespace dagtf {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the stream called `label` under `root`.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return splitmix64(splitmix64(root) ^ fnv1a64(label));
}

inline std::mt19937_64 make_stream(std::uint64_t root, std::string_view label) {
  return std::mt19937_64(derive_seed(root, label));
}

}  // namespace dagtf
