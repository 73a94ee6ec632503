// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace dime {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent child seed for a named purpose; stable across releases.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t purpose,
                                 std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(base) ^ purpose) + index);
}

// Purposes for derive_seed.
namespace seed_purpose {
inline constexpr std::uint64_t kStepPermutation = 0x7374657073ULL;
inline constexpr std::uint64_t kClassAssignment = 0x636c617373ULL;
inline constexpr std::uint64_t kPrototypes = 0x70726f746fULL;
inline constexpr std::uint64_t kSamples = 0x73616d706cULL;
inline constexpr std::uint64_t kBackbone = 0x6261636b62ULL;
inline constexpr std::uint64_t kAdapterInit = 0x61646170ULL;
inline constexpr std::uint64_t kShuffle = 0x73687566ULL;
}  // namespace seed_purpose

/// Uniform integer in [0, n) by rejection; independent of the standard
/// library's distribution implementation.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw > limit);
  return static_cast<std::size_t>(draw % bound);
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void fisher_yates(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace dime
