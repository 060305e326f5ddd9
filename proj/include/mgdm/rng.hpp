#pragma once

#include <cstdint>
#include <random>

namespace mgdm {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed splitting rule: the stream seed for (root, a, b) is
// mix64(mix64(mix64(root) ^ a) ^ b). Streams with distinct (a, b) are
// statistically independent for practical purposes, and the mapping is stable
// across platforms.
constexpr std::uint64_t split_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(root) ^ a) ^ b);
}

inline Rng make_rng(std::uint64_t root, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(split_seed(root, a, b));
}

}  // namespace mgdm
