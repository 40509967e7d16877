// SPDX-License-Identifier: Apache-2.0
/**
 * @file   quantcore.hpp
 * @brief  Group-wise 4-bit weight quantization, nibble packing and the two
 *         dequantization paths (sequential reference and parallel kernel
 *         emulation).
 *
 * Weights are K x N (reduction dimension first), stored row-major. A group
 * is `group_size` consecutive K-rows of a single column and shares one
 * (scale, zero) pair. Dequantization is (code - zero) * scale, rounded to
 * the nearest binary16 value.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/half.hpp"
#include "quick/permutation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quick {

inline constexpr std::size_t kCodesPerWord = 8;
inline constexpr std::uint8_t kMaxCode = 15;
inline constexpr std::size_t kDefaultGroupSize = 128;
/// Smallest scale the quantizer emits; also the scale of constant groups.
inline constexpr float kScaleFloor = 0x1.0p-10f;
inline constexpr std::uint8_t kConstantGroupZero = 8;
/// Significand bits kept in quantizer scales (binary16 has 11).
inline constexpr int kScaleSignificandBits = 7;

enum class Layout { natural, quick };

inline std::string_view to_string(Layout layout) {
  return layout == Layout::natural ? "natural" : "quick";
}

inline Layout parse_layout(std::string_view s) {
  if (s == "natural")
    return Layout::natural;
  if (s == "quick")
    return Layout::quick;
  throw LayoutError("unknown layout tag '" + std::string(s) + "'");
}

inline void check_weight_shape(std::size_t rows_k, std::size_t cols_n) {
  if (rows_k == 0 || rows_k % 16 != 0)
    throw ShapeError("rows_k must be a positive multiple of 16, got " + std::to_string(rows_k));
  if (cols_n == 0 || cols_n % 8 != 0)
    throw ShapeError("cols_n must be a positive multiple of 8, got " + std::to_string(cols_n));
}

struct WeightMatrix {
  std::size_t rows_k = 0;
  std::size_t cols_n = 0;
  std::vector<float> values;

  WeightMatrix() = default;
  WeightMatrix(std::size_t k, std::size_t n, std::vector<float> v)
      : rows_k(k), cols_n(n), values(std::move(v)) {
    check_weight_shape(rows_k, cols_n);
    if (values.size() != rows_k * cols_n)
      throw ShapeError("weight matrix holds " + std::to_string(values.size()) + " values, expected " +
                       std::to_string(rows_k * cols_n));
  }

  float at(std::size_t k, std::size_t n) const { return values[k * cols_n + n]; }
};

struct QuantParams {
  std::size_t group_size = kDefaultGroupSize;
  std::size_t cols_n = 0;
  std::vector<Half> scales;         // group-major, then column
  std::vector<std::uint8_t> zeros; // same order as scales

  std::size_t groups() const { return cols_n ? scales.size() / cols_n : 0; }
  Half scale(std::size_t group, std::size_t n) const { return scales[group * cols_n + n]; }
  std::uint8_t zero(std::size_t group, std::size_t n) const { return zeros[group * cols_n + n]; }
  Half scale_for_row(std::size_t k, std::size_t n) const { return scale(k / group_size, n); }
  std::uint8_t zero_for_row(std::size_t k, std::size_t n) const { return zero(k / group_size, n); }

  /// Throws unless the params describe a rows_k x cols_n matrix.
  void validate(std::size_t rows_k, std::size_t n) const {
    if (group_size < 16 || rows_k % group_size != 0)
      throw ShapeError("group_size " + std::to_string(group_size) + " must be >= 16 and divide rows_k " +
                       std::to_string(rows_k));
    if (cols_n != n)
      throw ShapeError("quant params are for " + std::to_string(cols_n) + " columns, matrix has " +
                       std::to_string(n));
    const std::size_t expected = (rows_k / group_size) * n;
    if (scales.size() != expected || zeros.size() != expected)
      throw ShapeError("quant params hold " + std::to_string(scales.size()) + " scales / " +
                       std::to_string(zeros.size()) + " zeros, expected " + std::to_string(expected));
    for (Half s : scales) {
      const float v = s.to_float();
      if (!(v > 0.0f) || !std::isfinite(v))
        throw DomainError("scales must be finite and positive");
    }
    for (std::uint8_t z : zeros)
      if (z > kMaxCode)
        throw DomainError("zero point " + std::to_string(z) + " outside [0, 15]");
  }

  friend bool operator==(const QuantParams &, const QuantParams &) = default;
};

struct QuantizedMatrix {
  std::size_t rows_k = 0;
  std::size_t cols_n = 0;
  std::vector<std::uint8_t> codes; // row-major, K x N
  QuantParams params;

  std::uint8_t code(std::size_t k, std::size_t n) const { return codes[k * cols_n + n]; }

  void validate() const {
    check_weight_shape(rows_k, cols_n);
    if (codes.size() != rows_k * cols_n)
      throw ShapeError("codes length does not match shape");
    for (std::uint8_t c : codes)
      if (c > kMaxCode)
        throw DomainError("code outside [0, 15]");
    params.validate(rows_k, cols_n);
  }
};

struct PackedWeights {
  std::size_t rows_k = 0;
  std::size_t cols_n = 0;
  Layout layout = Layout::natural;
  std::vector<std::uint32_t> words;

  friend bool operator==(const PackedWeights &, const PackedWeights &) = default;
};

namespace detail {

/// Smallest binary16 value >= x (x positive and finite).
inline Half ceil_to_half(double x) {
  Half h = Half::from_float(static_cast<float>(x));
  while (static_cast<double>(h.to_float()) < x)
    ++h.bits;
  return h;
}

/// Smallest normal binary16 value >= x whose significand fits in
/// kScaleSignificandBits bits. A 4-bit integer times such a value needs at
/// most 11 significand bits, so every (code - zero) * scale is exact.
inline Half ceil_to_scale_grid(double x) {
  constexpr std::uint16_t drop = (1u << (11 - kScaleSignificandBits)) - 1;
  Half h = ceil_to_half(x);
  h.bits = static_cast<std::uint16_t>((h.bits + drop) & ~drop);
  return h;
}

inline std::uint8_t clamp_code(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, static_cast<double>(kMaxCode)));
}

} // namespace detail

/// Single-element dequantization shared by every path.
inline Half dequant_value(std::uint8_t code, Half scale, std::uint8_t zero) {
  const float q = static_cast<float>(static_cast<int>(code) - static_cast<int>(zero));
  return Half::from_float(q * scale.to_float());
}

/**
 * Asymmetric min/max quantization per (group, column).
 *
 * The scale is (max - min) / 15 rounded up onto the binary16 values with a
 * 7-bit significand, floored at kScaleFloor. Rounding up keeps the 16 code
 * levels spanning the group; the short significand makes every dequantized
 * value exact in binary16. Constant groups get kScaleFloor and zero point 8.
 * Rounding is ties-to-even.
 */
inline QuantizedMatrix quantize(const WeightMatrix &w, std::size_t group_size = kDefaultGroupSize) {
  check_weight_shape(w.rows_k, w.cols_n);
  if (w.values.size() != w.rows_k * w.cols_n)
    throw ShapeError("weight matrix value count does not match shape");
  if (group_size < 16 || w.rows_k % group_size != 0)
    throw ShapeError("group_size " + std::to_string(group_size) + " must be >= 16 and divide rows_k " +
                     std::to_string(w.rows_k));
  for (float v : w.values)
    if (!std::isfinite(v))
      throw DomainError("weights must be finite");

  const std::size_t groups = w.rows_k / group_size;
  QuantizedMatrix q;
  q.rows_k = w.rows_k;
  q.cols_n = w.cols_n;
  q.codes.resize(w.values.size());
  q.params.group_size = group_size;
  q.params.cols_n = w.cols_n;
  q.params.scales.resize(groups * w.cols_n);
  q.params.zeros.resize(groups * w.cols_n);

  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t k0 = g * group_size;
    for (std::size_t n = 0; n < w.cols_n; ++n) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t k = k0; k < k0 + group_size; ++k) {
        lo = std::min<double>(lo, w.at(k, n));
        hi = std::max<double>(hi, w.at(k, n));
      }

      Half scale = Half::from_float(kScaleFloor);
      std::uint8_t zero = kConstantGroupZero;
      if (hi > lo) {
        scale = detail::ceil_to_scale_grid(std::max((hi - lo) / kMaxCode, static_cast<double>(kScaleFloor)));
        if (!std::isfinite(Half::from_float(kMaxCode * scale.to_float()).to_float()))
          throw DomainError("group range exceeds what binary16 scales and values can represent");
        zero = detail::clamp_code(std::nearbyint(-lo / scale.to_float()));
        // Both ends on a rounding tie can push the top code to 16.
        if (zero > 0 && std::nearbyint(hi / scale.to_float()) + zero > kMaxCode)
          --zero;
      }
      q.params.scales[g * w.cols_n + n] = scale;
      q.params.zeros[g * w.cols_n + n] = zero;

      const double s = scale.to_float();
      for (std::size_t k = k0; k < k0 + group_size; ++k)
        q.codes[k * w.cols_n + n] = detail::clamp_code(std::nearbyint(w.at(k, n) / s) + zero);
    }
  }
  return q;
}

inline WeightMatrix dequantize_reference(const QuantizedMatrix &q) {
  q.validate();
  std::vector<float> out(q.codes.size());
  for (std::size_t k = 0; k < q.rows_k; ++k)
    for (std::size_t n = 0; n < q.cols_n; ++n)
      out[k * q.cols_n + n] =
          dequant_value(q.code(k, n), q.params.scale_for_row(k, n), q.params.zero_for_row(k, n)).to_float();
  return WeightMatrix(q.rows_k, q.cols_n, std::move(out));
}

/// Index of the natural-layout word holding row k, columns (n/8)*8 .. +7.
inline std::size_t natural_word_index(std::size_t rows_k, std::size_t k, std::size_t n) {
  return (n / kCodesPerWord) * rows_k + k;
}

inline PackedWeights pack_natural(const QuantizedMatrix &q) {
  check_weight_shape(q.rows_k, q.cols_n);
  if (q.codes.size() != q.rows_k * q.cols_n)
    throw ShapeError("codes length does not match shape");
  PackedWeights p{q.rows_k, q.cols_n, Layout::natural, std::vector<std::uint32_t>(q.codes.size() / kCodesPerWord)};
  for (std::size_t k = 0; k < q.rows_k; ++k) {
    for (std::size_t n = 0; n < q.cols_n; ++n) {
      const std::uint8_t c = q.code(k, n);
      if (c > kMaxCode)
        throw DomainError("code outside [0, 15]");
      p.words[natural_word_index(q.rows_k, k, n)] |= static_cast<std::uint32_t>(c) << (4 * (n % kCodesPerWord));
    }
  }
  return p;
}

/// Row-major K x N codes recovered from a natural-layout stream.
inline std::vector<std::uint8_t> unpack_natural(const PackedWeights &p) {
  if (p.layout != Layout::natural)
    throw LayoutError("unpack_natural needs the natural layout; deinterleave first");
  check_weight_shape(p.rows_k, p.cols_n);
  if (p.words.size() != p.rows_k * p.cols_n / kCodesPerWord)
    throw ShapeError("word count does not match shape");
  std::vector<std::uint8_t> codes(p.rows_k * p.cols_n);
  for (std::size_t k = 0; k < p.rows_k; ++k)
    for (std::size_t n = 0; n < p.cols_n; ++n)
      codes[k * p.cols_n + n] =
          static_cast<std::uint8_t>((p.words[natural_word_index(p.rows_k, k, n)] >> (4 * (n % kCodesPerWord))) & 0xFu);
  return codes;
}

/**
 * Emulates the parallel i4 -> f16 kernel on one word: output slot j holds
 * (nibble[order[j]] - zero_j) * scale_j where order is
 * layout::dequant_order_permutation(). Scale and zero are indexed by output
 * slot, since the kernel applies them after extraction.
 */
inline std::array<Half, 8> dequant_word_parallel(std::uint32_t word, std::span<const Half, 8> scale_per_slot,
                                                 std::span<const std::uint8_t, 8> zero_per_slot) {
  const layout::Permutation &order = layout::dequant_order_permutation();
  std::array<Half, 8> out{};
  for (std::size_t j = 0; j < 8; ++j) {
    const auto nibble = static_cast<std::uint8_t>((word >> (4 * order[j])) & 0xFu);
    out[j] = dequant_value(nibble, scale_per_slot[j], zero_per_slot[j]);
  }
  return out;
}

inline std::array<Half, 8> dequant_word_parallel(std::uint32_t word, Half scale, std::uint8_t zero) {
  if (!(scale.to_float() > 0.0f))
    throw DomainError("scale must be positive");
  if (zero > kMaxCode)
    throw DomainError("zero point outside [0, 15]");
  std::array<Half, 8> scales;
  std::array<std::uint8_t, 8> zeros;
  scales.fill(scale);
  zeros.fill(zero);
  return dequant_word_parallel(word, std::span<const Half, 8>(scales), std::span<const std::uint8_t, 8>(zeros));
}

/// Per-nibble sequential dequantization, nibble 0 first.
inline std::array<Half, 8> dequant_word_sequential(std::uint32_t word, Half scale, std::uint8_t zero) {
  std::array<Half, 8> out{};
  for (std::size_t i = 0; i < 8; ++i)
    out[i] = dequant_value(static_cast<std::uint8_t>((word >> (4 * i)) & 0xFu), scale, zero);
  return out;
}

} // namespace quick
