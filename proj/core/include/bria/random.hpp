#pragma once

#include <cstdint>

namespace bria {

/// SplitMix64 finaliser; used to derive independent per-FOV / per-cell seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(seed ^ mix64(a)) ^ mix64(b + 0x632BE59BD9B4E019ULL));
}

/// Uniform double in [0, 1) from a 64-bit hash.
constexpr double unit_from_hash(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace bria
