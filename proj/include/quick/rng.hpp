// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  SplitMix64 generator used for every seeded fixture.
 *
 * Constants follow the reference SplitMix64: state advances by
 * 0x9E3779B97F4A7C15, output mixes with 0xBF58476D1CE4E5B9 and
 * 0x94D049BB133111EB (shifts 30, 27, 31). Derived draws are defined in terms
 * of next() only so any port reproduces the same streams.
 */
#pragma once

#include <cstdint>

namespace quick {

class SplitMix64 {
public:
  explicit constexpr SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  constexpr std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Top 32 bits of next().
  constexpr std::uint32_t next_u32() { return static_cast<std::uint32_t>(next() >> 32); }

  /// Uniform integer in [0, bound) by multiply-shift on the top 32 bits.
  constexpr std::uint32_t below(std::uint32_t bound) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * bound) >> 32);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
  std::uint64_t state_;
};

} // namespace quick
