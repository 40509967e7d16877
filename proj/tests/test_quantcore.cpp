// SPDX-License-Identifier: Apache-2.0
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace {

using namespace quick;
using quick::testing::random_quantized;
using quick::testing::random_weights;

TEST(Quantize, ConstantZeroGroupUsesZeroPoint) {
  const WeightMatrix w(16, 8, std::vector<float>(128, 0.0f));
  const QuantizedMatrix q = quantize(w, 16);
  for (std::uint8_t c : q.codes)
    EXPECT_EQ(c, kConstantGroupZero);
  for (Half s : q.params.scales)
    EXPECT_EQ(s.to_float(), 0x1.0p-10f);
  for (float v : dequantize_reference(q).values)
    EXPECT_EQ(v, 0.0f);
}

TEST(Quantize, EvenlySpacedGroupRoundTripsExactly) {
  // column n holds -1.0, -0.875, ..., 0.875 down the 16 rows
  std::vector<float> v(16 * 8);
  for (std::size_t k = 0; k < 16; ++k)
    for (std::size_t n = 0; n < 8; ++n)
      v[k * 8 + n] = -1.0f + 0.125f * static_cast<float>(k);
  const WeightMatrix w(16, 8, v);
  const QuantizedMatrix q = quantize(w, 16);
  for (std::size_t n = 0; n < 8; ++n) {
    EXPECT_EQ(q.params.scale(0, n).to_float(), 0.125f);
    EXPECT_EQ(q.params.zero(0, n), 8);
    for (std::size_t k = 0; k < 16; ++k)
      EXPECT_EQ(q.code(k, n), k);
  }
  EXPECT_EQ(dequantize_reference(q).values, v);
}

TEST(Quantize, ErrorWithinHalfStepForGroupsStraddlingZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const WeightMatrix w = random_weights(64, 16, seed, -2.0, 1.5);
    const QuantizedMatrix q = quantize(w, 32);
    const WeightMatrix d = dequantize_reference(q);
    for (std::size_t k = 0; k < w.rows_k; ++k)
      for (std::size_t n = 0; n < w.cols_n; ++n) {
        const double s = q.params.scale_for_row(k, n).to_float();
        EXPECT_LE(std::fabs(w.at(k, n) - d.at(k, n)), s / 2);
      }
  }
}

TEST(Quantize, DequantizedValuesAreExactProducts) {
  const QuantizedMatrix q = quantize(random_weights(128, 32, 3, -3.0, 2.0), 16);
  const WeightMatrix d = dequantize_reference(q);
  for (std::size_t k = 0; k < q.rows_k; ++k)
    for (std::size_t n = 0; n < q.cols_n; ++n) {
      const Half s = q.params.scale_for_row(k, n);
      EXPECT_EQ(s.bits & 0xF, 0) << "scale keeps at most 7 significand bits";
      const double exact = (static_cast<double>(q.code(k, n)) - q.params.zero_for_row(k, n)) * s.to_float();
      EXPECT_EQ(static_cast<double>(d.at(k, n)), exact);
    }
}

TEST(Quantize, ScaleIsSmallestGridValueCoveringRange) {
  // 1/15 = 1.0667 * 2^-4; with 6 fraction bits the next value up is 69/64 * 2^-4
  std::vector<float> v(16 * 8, 0.0f);
  for (std::size_t n = 0; n < 8; ++n)
    v[15 * 8 + n] = 1.0f;
  const QuantizedMatrix q = quantize(WeightMatrix(16, 8, v), 16);
  EXPECT_EQ(q.params.scale(0, 0).to_float(), 69.0f / 64.0f / 16.0f);
  EXPECT_EQ(q.params.zero(0, 0), 0);
  EXPECT_EQ(q.code(15, 0), 15);
}

TEST(Quantize, TieAtBothEndsKeepsTopCodeInRange) {
  // lo = -7.5 s, hi = 7.5 s with s = 0.125: both ends tie, ties-to-even
  // would give zero 8 and top code 16.
  std::vector<float> v(16 * 8, 0.0f);
  for (std::size_t n = 0; n < 8; ++n) {
    v[n] = -0.9375f;
    v[8 + n] = 0.9375f;
  }
  const QuantizedMatrix q = quantize(WeightMatrix(16, 8, v), 16);
  const WeightMatrix d = dequantize_reference(q);
  EXPECT_EQ(q.params.scale(0, 0).to_float(), 0.125f);
  EXPECT_EQ(q.params.zero(0, 0), 7);
  EXPECT_EQ(std::fabs(d.at(0, 0) - v[0]), 0.0625f);
  EXPECT_EQ(std::fabs(d.at(1, 0) - v[8]), 0.0625f);
}

TEST(Quantize, Errors) {
  const WeightMatrix w = random_weights(32, 8, 1);
  EXPECT_THROW(quantize(w, 24), ShapeError);
  EXPECT_THROW(quantize(w, 8), ShapeError);
  WeightMatrix bad = w;
  bad.values[3] = std::nanf("");
  EXPECT_THROW(quantize(bad, 16), DomainError);
  bad.values[3] = INFINITY;
  EXPECT_THROW(quantize(bad, 16), DomainError);
  EXPECT_THROW(WeightMatrix(24, 8, std::vector<float>(24 * 8)), ShapeError);
  EXPECT_THROW(WeightMatrix(16, 12, std::vector<float>(16 * 12)), ShapeError);
  EXPECT_THROW(WeightMatrix(16, 8, std::vector<float>(10)), ShapeError);
}

TEST(Quantize, Deterministic) {
  const WeightMatrix w = random_weights(128, 64, 99);
  const QuantizedMatrix a = quantize(w, 128), b = quantize(w, 128);
  EXPECT_EQ(a.codes, b.codes);
  EXPECT_EQ(a.params, b.params);
}

TEST(Dequantize, Values) {
  EXPECT_EQ(dequant_value(7, Half::from_float(0.3f), 7).to_float(), 0.0f);
  EXPECT_EQ(dequant_value(5, Half::from_float(0.5f), 3).to_float(), 1.0f);
  EXPECT_EQ(dequant_value(15, Half::from_float(1.0f), 0).to_float(), 15.0f);
  EXPECT_EQ(dequant_value(0, Half::from_float(2.0f), 15).to_float(), -30.0f);
}

TEST(Pack, NibbleOrder) {
  QuantizedMatrix q = random_quantized(16, 8, 16, 3);
  for (std::size_t n = 0; n < 8; ++n)
    q.codes[n] = static_cast<std::uint8_t>(n + 1);
  const PackedWeights p = pack_natural(q);
  EXPECT_EQ(p.layout, Layout::natural);
  EXPECT_EQ(p.words.size(), 16u);
  EXPECT_EQ(p.words[0], 0x87654321u);
  const auto codes = unpack_natural(p);
  EXPECT_EQ(std::vector<std::uint8_t>(codes.begin(), codes.begin() + 8),
            (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Pack, FlatTraversalIsColumnBlockMajor) {
  QuantizedMatrix q = random_quantized(32, 16, 16, 4);
  std::fill(q.codes.begin(), q.codes.end(), 0);
  q.codes[5 * 16 + 8 + 2] = 9; // row 5, column block 1, offset 2
  const PackedWeights p = pack_natural(q);
  for (std::size_t i = 0; i < p.words.size(); ++i)
    EXPECT_EQ(p.words[i], i == 1 * 32 + 5 ? 0x900u : 0u);
}

TEST(Pack, ZeroCodesGiveZeroWords) {
  QuantizedMatrix q = random_quantized(32, 8, 32, 5);
  std::fill(q.codes.begin(), q.codes.end(), 0);
  for (std::uint32_t w : pack_natural(q).words)
    EXPECT_EQ(w, 0u);
}

TEST(Pack, RoundTripProperty) {
  const std::size_t shapes[][2] = {{16, 8}, {32, 8}, {48, 24}, {128, 64}, {256, 256}};
  std::uint64_t seed = 11;
  for (const auto &s : shapes)
    for (int rep = 0; rep < 5; ++rep) {
      const QuantizedMatrix q = random_quantized(s[0], s[1], 16, seed++);
      EXPECT_EQ(unpack_natural(pack_natural(q)), q.codes);
    }
}

TEST(Pack, UnpackRejectsQuickLayout) {
  PackedWeights p = pack_natural(random_quantized(32, 8, 32, 6));
  p.layout = Layout::quick;
  EXPECT_THROW(unpack_natural(p), LayoutError);
}

TEST(DequantWordParallel, ExtractionOrder) {
  const auto out = dequant_word_parallel(0x87654321u, Half::from_float(1.0f), 0);
  const float expected[8] = {1, 3, 5, 7, 2, 4, 6, 8};
  for (int j = 0; j < 8; ++j)
    EXPECT_EQ(out[j].to_float(), expected[j]);
}

TEST(DequantWordParallel, ZeroPointWordGivesZeros) {
  for (const auto h : dequant_word_parallel(0x55555555u, Half::from_float(0.7f), 5))
    EXPECT_EQ(h.to_float(), 0.0f);
}

TEST(DequantWordParallel, IsPermutationOfSequential) {
  SplitMix64 rng(12);
  const layout::Permutation &order = layout::dequant_order_permutation();
  for (int i = 0; i < 20000; ++i) {
    const std::uint32_t word = rng.next_u32();
    const Half scale = Half::from_float(static_cast<float>(rng.uniform(0.001, 4.0)));
    const auto zero = static_cast<std::uint8_t>(rng.below(16));
    const auto par = dequant_word_parallel(word, scale, zero);
    const auto seq = dequant_word_sequential(word, scale, zero);
    for (std::size_t j = 0; j < 8; ++j)
      ASSERT_EQ(par[j], seq[order[j]]);
  }
}

TEST(DequantWordParallel, RejectsBadParams) {
  EXPECT_THROW(dequant_word_parallel(0, Half::from_float(0.0f), 0), DomainError);
  EXPECT_THROW(dequant_word_parallel(0, Half::from_float(1.0f), 16), DomainError);
}

TEST(QuantParams, Validate) {
  QuantizedMatrix q = random_quantized(32, 8, 16, 8);
  EXPECT_NO_THROW(q.validate());
  q.params.zeros[0] = 16;
  EXPECT_THROW(q.validate(), DomainError);
  q = random_quantized(32, 8, 16, 8);
  q.params.scales[1] = Half::from_float(-1.0f);
  EXPECT_THROW(q.validate(), DomainError);
  q = random_quantized(32, 8, 16, 8);
  q.params.scales.pop_back();
  EXPECT_THROW(q.validate(), ShapeError);
}

} // namespace
