// SPDX-License-Identifier: Apache-2.0
/**
 * @file   permutation.hpp
 * @brief  Gather-form permutations and the nibble extraction order of the
 *         parallel i4 -> f16 dequantization kernel.
 */
#pragma once

#include "quick/error.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace quick::layout {

/// A bijection on [0, size) stored in gather form: output position j takes
/// the element at source position order()[j].
class Permutation {
public:
  Permutation() = default;

  explicit Permutation(std::vector<std::size_t> order) : order_(std::move(order)) {
    std::vector<bool> seen(order_.size(), false);
    for (std::size_t src : order_) {
      if (src >= order_.size() || seen[src])
        throw std::invalid_argument("permutation: order is not a bijection");
      seen[src] = true;
    }
  }

  static Permutation identity(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
      order[i] = i;
    return Permutation(std::move(order));
  }

  std::size_t size() const { return order_.size(); }
  std::size_t operator[](std::size_t dst) const { return order_[dst]; }
  const std::vector<std::size_t> &order() const { return order_; }

  Permutation inverse() const {
    std::vector<std::size_t> inv(order_.size());
    for (std::size_t dst = 0; dst < order_.size(); ++dst)
      inv[order_[dst]] = dst;
    return Permutation(std::move(inv));
  }

  /// Permutation equivalent to applying *this first and then `next`.
  Permutation then(const Permutation &next) const {
    if (next.size() != size())
      throw std::invalid_argument("permutation: size mismatch in composition");
    std::vector<std::size_t> out(size());
    for (std::size_t j = 0; j < size(); ++j)
      out[j] = order_[next.order_[j]];
    return Permutation(std::move(out));
  }

  template <typename T> std::vector<T> apply(std::span<const T> in) const {
    if (in.size() != size())
      throw std::invalid_argument("permutation: input size mismatch");
    std::vector<T> out;
    out.reserve(size());
    for (std::size_t src : order_)
      out.push_back(in[src]);
    return out;
  }

  /// Deterministic text form, e.g. "size=8 order=0,2,4,6,1,3,5,7".
  std::string to_text() const {
    std::ostringstream os;
    os << "size=" << size() << " order=";
    for (std::size_t i = 0; i < order_.size(); ++i)
      os << (i ? "," : "") << order_[i];
    return os.str();
  }

  friend bool operator==(const Permutation &, const Permutation &) = default;

private:
  std::vector<std::size_t> order_;
};

/// Nibble order in which the parallel dequantization kernel emits values:
/// output slot j holds nibble dequant_order()[j]. Even nibbles come out
/// first, then odd ones, because each extraction mask covers every other
/// nibble of the 32-bit word.
inline constexpr std::size_t kDequantOrder[8] = {0, 2, 4, 6, 1, 3, 5, 7};

inline const Permutation &dequant_order_permutation() {
  static const Permutation perm(std::vector<std::size_t>(std::begin(kDequantOrder), std::end(kDequantOrder)));
  return perm;
}

/// Rearranges the eight nibbles of a word: nibble j of the result is nibble
/// perm[j] of `word`.
inline std::uint32_t permute_nibbles(std::uint32_t word, const Permutation &perm) {
  if (perm.size() != 8)
    throw std::invalid_argument("permute_nibbles: permutation must have size 8");
  std::uint32_t out = 0;
  for (std::size_t j = 0; j < 8; ++j)
    out |= ((word >> (4 * perm[j])) & 0xFu) << (4 * j);
  return out;
}

} // namespace quick::layout
