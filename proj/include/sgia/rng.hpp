// SPDX-License-Identifier: Apache-2.0
//
// Portable deterministic randomness. Standard library distributions are
// implementation-defined, so every draw that feeds a persisted artifact
// (splits, stores, plans, weight init) goes through these helpers instead.
#pragma once

#include <cstdint>
#include <initializer_list>

namespace sgia {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Folds a sequence of integers into one seed:
//   h_0 = mix64(gamma), h_{n+1} = mix64(h_n ^ mix64(v_n + gamma)).
// Stable across releases; changing it invalidates every stored seed.
constexpr std::uint64_t hash_seed(std::initializer_list<std::uint64_t> values) {
  std::uint64_t h = mix64(kGoldenGamma);
  for (std::uint64_t v : values) h = mix64(h ^ mix64(v + kGoldenGamma));
  return h;
}

// Per-sequence generation seed for sequence (i, j) of a store.
constexpr std::uint64_t sequence_seed(std::uint64_t base_seed, std::uint64_t i,
                                      std::uint64_t j) {
  return hash_seed({base_seed, i, j});
}

// SplitMix64 stream.
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next_u64() {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  constexpr double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Uniform integer in [lo, hi] (inclusive), unbiased via rejection.
  constexpr std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<std::int64_t>(x % span);
  }

  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace sgia
