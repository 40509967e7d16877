// SPDX-License-Identifier: Apache-2.0
#include "quick/half.hpp"
#include "quick/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

namespace {

using quick::Half;

// Oracle: every non-negative binary16 value decoded by its textbook formula,
// then the nearest one picked by search, ties to the even bit pattern.
struct NearestHalf {
  std::vector<double> values; // index == bit pattern, 0x0000 .. 0x7c00 (inf as 65536)

  NearestHalf() {
    for (std::uint32_t b = 0; b <= 0x7c00; ++b) {
      const std::uint32_t e = b >> 10, m = b & 0x3ff;
      if (b == 0x7c00)
        values.push_back(65536.0);
      else if (e == 0)
        values.push_back(std::ldexp(static_cast<double>(m), -24));
      else
        values.push_back(std::ldexp(1.0 + m / 1024.0, static_cast<int>(e) - 15));
    }
  }

  std::uint16_t encode(float x) const {
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    const double a = std::fabs(static_cast<double>(x));
    if (a >= 65536.0)
      return sign | 0x7c00;
    const auto it = std::lower_bound(values.begin(), values.end(), a);
    const auto hi = static_cast<std::uint16_t>(it - values.begin());
    if (values[hi] == a || hi == 0)
      return sign | hi;
    const std::uint16_t lo = hi - 1;
    const double dlo = a - values[lo], dhi = values[hi] - a;
    if (dlo < dhi)
      return sign | lo;
    if (dhi < dlo)
      return sign | hi;
    return sign | ((lo & 1) ? hi : lo);
  }
};

const NearestHalf &oracle() {
  static const NearestHalf o;
  return o;
}

TEST(Half, DecodeMatchesOracleForEveryFinitePattern) {
  for (std::uint32_t b = 0; b < 0x7c00; ++b) {
    EXPECT_EQ(Half::from_bits(static_cast<std::uint16_t>(b)).to_float(), static_cast<float>(oracle().values[b]));
    EXPECT_EQ(Half::from_bits(static_cast<std::uint16_t>(b | 0x8000)).to_float(), -static_cast<float>(oracle().values[b]));
  }
}

TEST(Half, RoundTripsEveryPattern) {
  for (std::uint32_t b = 0; b <= 0xffff; ++b) {
    const Half h = Half::from_bits(static_cast<std::uint16_t>(b));
    if (std::isnan(h.to_float()))
      EXPECT_TRUE(std::isnan(Half::from_float(h.to_float()).to_float()));
    else
      EXPECT_EQ(Half::from_float(h.to_float()).bits, b);
  }
}

TEST(Half, MidpointsRoundToEven) {
  for (std::uint32_t b = 0; b < 0x7c00; ++b) {
    const float mid = static_cast<float>((oracle().values[b] + oracle().values[b + 1]) / 2);
    EXPECT_EQ(Half::from_float(mid).bits, oracle().encode(mid)) << "pattern " << b;
    EXPECT_EQ(Half::from_float(-mid).bits, oracle().encode(-mid));
  }
}

TEST(Half, RandomFloatsMatchNearestSearch) {
  quick::SplitMix64 rng(7);
  for (int i = 0; i < 200000; ++i) {
    // spread over the whole binary16 range including subnormals
    const double mag = std::ldexp(rng.unit(), static_cast<int>(rng.below(42)) - 26);
    const float x = static_cast<float>(rng.below(2) ? mag : -mag);
    ASSERT_EQ(Half::from_float(x).bits, oracle().encode(x)) << x;
  }
}

TEST(Half, Specials) {
  EXPECT_EQ(Half::from_float(65504.0f).bits, 0x7bff);
  EXPECT_EQ(Half::from_float(65519.99f).bits, 0x7bff);
  EXPECT_EQ(Half::from_float(65520.0f).bits, 0x7c00);
  EXPECT_EQ(Half::from_float(1e9f).bits, 0x7c00);
  EXPECT_EQ(Half::from_float(-std::numeric_limits<float>::infinity()).bits, 0xfc00);
  EXPECT_TRUE(std::isnan(Half::from_float(std::numeric_limits<float>::quiet_NaN()).to_float()));
  EXPECT_EQ(Half::from_float(-0.0f).bits, 0x8000);
  EXPECT_EQ(Half::from_float(1e-10f).bits, 0x0000);
  EXPECT_EQ(Half::from_float(0x1.0p-10f).bits, 0x1400);
}

} // namespace
