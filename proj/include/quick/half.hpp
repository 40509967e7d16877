// SPDX-License-Identifier: Apache-2.0
/**
 * @file   half.hpp
 * @brief  IEEE 754 binary16 storage type with round-to-nearest-even
 *         conversion from single precision.
 *
 * Only conversions are provided. Arithmetic happens in float, mirroring how
 * the tensor-core datapath widens half inputs before accumulating.
 */
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace quick {

struct Half {
  std::uint16_t bits = 0;

  static constexpr Half from_bits(std::uint16_t b) { return Half{b}; }
  static Half from_float(float x);
  float to_float() const;

  friend constexpr bool operator==(Half, Half) = default;
};

inline Half Half::from_float(float x) {
  const std::uint32_t f = std::bit_cast<std::uint32_t>(x);
  const auto sign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
  const std::uint32_t mag = f & 0x7fffffffu;

  if (mag >= 0x7f800000u) {
    // inf stays inf; NaN keeps its top payload bits and stays quiet
    if (mag == 0x7f800000u)
      return from_bits(sign | 0x7c00u);
    return from_bits(static_cast<std::uint16_t>(sign | 0x7e00u | ((mag >> 13) & 0x3ffu)));
  }
  if (mag >= 0x47800000u) // >= 65536
    return from_bits(sign | 0x7c00u);

  if (mag < 0x38800000u) {
    // half subnormal range: value = m * 2^-24, scaling by 2^24 is exact
    const float scaled = std::bit_cast<float>(mag) * 16777216.0f;
    const auto m = static_cast<std::uint32_t>(std::nearbyint(scaled));
    return from_bits(static_cast<std::uint16_t>(sign | m));
  }

  const std::uint32_t exp = (mag >> 23) - 127 + 15;
  const std::uint32_t mant = mag & 0x7fffffu;
  std::uint32_t h = (exp << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u)))
    ++h; // a carry out of the mantissa bumps the exponent, up to inf
  return from_bits(static_cast<std::uint16_t>(sign | h));
}

inline float Half::to_float() const {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1fu;
  const std::uint32_t mant = bits & 0x3ffu;

  if (exp == 0) {
    const float v = static_cast<float>(mant) * 5.9604644775390625e-8f; // 2^-24
    return sign ? -v : v;
  }
  if (exp == 0x1f)
    return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

/// Rounds a float to the nearest binary16 value and widens it back.
inline float round_to_half(float x) { return Half::from_float(x).to_float(); }

} // namespace quick
