// SPDX-License-Identifier: Apache-2.0
/**
 * @file   layout.hpp
 * @brief  Tensor-core fragment coordinate maps and the offline QUICK weight
 *         interleaving (ldmatrix bypass + dequant-order pre-permutation).
 *
 * Quick stream addressing. Let W = rows_k / 32 (k-pairs), r = tile_n / 8
 * (column blocks per warp tile). The word that lane `l` consumes for k-pair
 * `w` of column block `nb` lives at
 *
 *     ((t * W + w) * 32 + l) * r + j,    t = nb / r, j = nb % r
 *
 * so each warp-wide load of a k step reads 32 * r consecutive words and
 * every lane's r words are adjacent. Inside a word, after the parallel
 * dequantizer runs, output slots 0-3 are the lane's mma B fragment for
 * k-tile 2w and slots 4-7 the fragment for k-tile 2w + 1.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/permutation.hpp"
#include "quick/quantcore.hpp"
#include "quick/schedule.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace quick::layout {

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend constexpr bool operator==(Cell, Cell) = default;
};

/// Position of one B-operand element (k, n) inside a lane's registers.
struct FragmentCoord {
  std::size_t lane = 0;
  std::size_t slot = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  friend constexpr bool operator==(FragmentCoord, FragmentCoord) = default;
};

inline void check_lane(std::size_t lane) {
  if (lane >= kWarpSize)
    throw BoundsError("lane " + std::to_string(lane) + " outside [0, 32)");
}

/// Elements of an 8x8 b16 matrix that land in `lane`'s destination register.
inline std::array<Cell, 2> ldmatrix_map_8x8(std::size_t lane) {
  check_lane(lane);
  const std::size_t row = lane / 4;
  const std::size_t col = 2 * (lane % 4);
  return {Cell{row, col}, Cell{row, col + 1}};
}

/// B operand (K x N = 16 x 8) of mma.m16n8k16: two 8x8 blocks stacked on K.
inline std::array<FragmentCoord, 4> mma_b_map_16x8(std::size_t lane) {
  check_lane(lane);
  std::array<FragmentCoord, 4> out{};
  for (std::size_t slot = 0; slot < 4; ++slot)
    out[slot] = FragmentCoord{lane, slot, 2 * (lane % 4) + slot % 2 + 8 * (slot / 2), lane / 4};
  return out;
}

/// A operand (M x K = 16 x 16); row = m, col = k.
inline std::array<Cell, 8> mma_a_map_16x16(std::size_t lane) {
  check_lane(lane);
  std::array<Cell, 8> out{};
  for (std::size_t i = 0; i < 8; ++i)
    out[i] = Cell{lane / 4 + 8 * ((i / 2) % 2), 2 * (lane % 4) + i % 2 + 8 * (i / 4)};
  return out;
}

/// Accumulator (M x N = 16 x 8); row = m, col = n.
inline std::array<Cell, 4> mma_c_map_16x8(std::size_t lane) {
  check_lane(lane);
  std::array<Cell, 4> out{};
  for (std::size_t i = 0; i < 4; ++i)
    out[i] = Cell{lane / 4 + 8 * (i / 2), 2 * (lane % 4) + i % 2};
  return out;
}

/// Per-lane table over one 32 x 8 k-pair tile: entry [lane][i] is the
/// (k, n) cell, local to the tile, that ends up in element i.
using TileTable = std::array<std::array<Cell, 8>, kWarpSize>;

/// Fragment gather factor: element s is the cell feeding output slot s.
inline const TileTable &slot_gather_table() {
  static const TileTable table = [] {
    TileTable t{};
    for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
      const auto coords = mma_b_map_16x8(lane);
      for (std::size_t s = 0; s < 8; ++s) {
        const FragmentCoord &c = coords[s % 4];
        t[lane][s] = Cell{kMmaK * (s / 4) + c.k, c.n};
      }
    }
    return t;
  }();
  return table;
}

/// Combined map: element i is the cell whose code is stored in nibble i of
/// the lane's interleaved word (slot order pre-permuted by the inverse of
/// the dequantizer's extraction order).
inline const TileTable &nibble_source_table() {
  static const TileTable table = [] {
    const Permutation inv = dequant_order_permutation().inverse();
    const TileTable &slots = slot_gather_table();
    TileTable t{};
    for (std::size_t lane = 0; lane < kWarpSize; ++lane)
      for (std::size_t i = 0; i < 8; ++i)
        t[lane][i] = slots[lane][inv[i]];
    return t;
  }();
  return table;
}

inline void check_quick_shape(std::size_t rows_k, std::size_t cols_n, const KernelSchedule &sched) {
  sched.validate();
  check_weight_shape(rows_k, cols_n);
  if (rows_k % sched.k_rows_per_load() != 0)
    throw ShapeError("rows_k " + std::to_string(rows_k) + " must be a multiple of " +
                     std::to_string(sched.k_rows_per_load()) + " for the quick layout");
  if (cols_n % sched.tile_n != 0)
    throw ShapeError("cols_n " + std::to_string(cols_n) + " must be a multiple of schedule tile_n " +
                     std::to_string(sched.tile_n));
}

/// Stream address of the word lane `lane` loads for k-pair `kpair` of column block `nb`.
inline std::size_t quick_word_index(std::size_t rows_k, const KernelSchedule &sched, std::size_t nb,
                                    std::size_t kpair, std::size_t lane) {
  const std::size_t r = sched.n_blocks_per_tile();
  const std::size_t kpairs = rows_k / sched.k_rows_per_load();
  return (((nb / r) * kpairs + kpair) * kWarpSize + lane) * r + nb % r;
}

namespace detail {

inline std::uint32_t nibble_at(const std::vector<std::uint32_t> &natural, std::size_t rows_k, std::size_t k,
                               std::size_t n) {
  return (natural[natural_word_index(rows_k, k, n)] >> (4 * (n % kCodesPerWord))) & 0xFu;
}

inline void check_packed(const PackedWeights &p, Layout expected, const KernelSchedule &sched) {
  if (p.layout != expected)
    throw LayoutError(std::string("expected ") + std::string(to_string(expected)) + " layout, got " +
                      std::string(to_string(p.layout)));
  check_quick_shape(p.rows_k, p.cols_n, sched);
  if (p.words.size() != p.rows_k * p.cols_n / kCodesPerWord)
    throw ShapeError("word count does not match shape");
}

/// Builds a quick-ordered stream from a natural one using `table`.
inline std::vector<std::uint32_t> gather_tiles(const PackedWeights &p, const KernelSchedule &sched,
                                               const TileTable &table) {
  const std::size_t kpairs = p.rows_k / sched.k_rows_per_load();
  std::vector<std::uint32_t> out(p.words.size());
  for (std::size_t nb = 0; nb < p.cols_n / kMmaN; ++nb)
    for (std::size_t w = 0; w < kpairs; ++w)
      for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
        std::uint32_t word = 0;
        for (std::size_t i = 0; i < 8; ++i) {
          const Cell c = table[lane][i];
          word |= nibble_at(p.words, p.rows_k, w * sched.k_rows_per_load() + c.row, nb * kMmaN + c.col) << (4 * i);
        }
        out[quick_word_index(p.rows_k, sched, nb, w, lane)] = word;
      }
  return out;
}

} // namespace detail

/// First factor of the interleave: words in quick stream order whose
/// nibble s holds the code for output slot s (no dequant-order folding).
inline std::vector<std::uint32_t> fragment_gather(const PackedWeights &natural, const KernelSchedule &sched) {
  detail::check_packed(natural, Layout::natural, sched);
  return detail::gather_tiles(natural, sched, slot_gather_table());
}

/// Second factor: fold the inverse extraction order into every word so the
/// parallel dequantizer emits slots in order.
inline std::vector<std::uint32_t> fold_dequant_order(std::vector<std::uint32_t> words) {
  const Permutation inv = dequant_order_permutation().inverse();
  for (std::uint32_t &w : words)
    w = permute_nibbles(w, inv);
  return words;
}

inline PackedWeights interleave_quick(const PackedWeights &natural, const KernelSchedule &sched = {}) {
  detail::check_packed(natural, Layout::natural, sched);
  return PackedWeights{natural.rows_k, natural.cols_n, Layout::quick,
                       detail::gather_tiles(natural, sched, nibble_source_table())};
}

inline PackedWeights deinterleave_quick(const PackedWeights &quick, const KernelSchedule &sched = {}) {
  detail::check_packed(quick, Layout::quick, sched);
  const TileTable &table = nibble_source_table();
  const std::size_t kpairs = quick.rows_k / sched.k_rows_per_load();
  PackedWeights out{quick.rows_k, quick.cols_n, Layout::natural, std::vector<std::uint32_t>(quick.words.size())};
  for (std::size_t nb = 0; nb < quick.cols_n / kMmaN; ++nb)
    for (std::size_t w = 0; w < kpairs; ++w)
      for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
        const std::uint32_t word = quick.words[quick_word_index(quick.rows_k, sched, nb, w, lane)];
        for (std::size_t i = 0; i < 8; ++i) {
          const Cell c = table[lane][i];
          const std::size_t k = w * sched.k_rows_per_load() + c.row;
          const std::size_t n = nb * kMmaN + c.col;
          out.words[natural_word_index(quick.rows_k, k, n)] |= ((word >> (4 * i)) & 0xFu) << (4 * (n % kCodesPerWord));
        }
      }
  return out;
}

/**
 * Whole-matrix interleave as a permutation over nibble positions
 * (position = word * 8 + nibble): quick position j takes natural position
 * order[j]. Intended for conformance export on small shapes.
 */
inline Permutation interleave_permutation(std::size_t rows_k, std::size_t cols_n, const KernelSchedule &sched = {}) {
  check_quick_shape(rows_k, cols_n, sched);
  const TileTable &table = nibble_source_table();
  const std::size_t kpairs = rows_k / sched.k_rows_per_load();
  std::vector<std::size_t> order(rows_k * cols_n);
  for (std::size_t nb = 0; nb < cols_n / kMmaN; ++nb)
    for (std::size_t w = 0; w < kpairs; ++w)
      for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
        const std::size_t dst = quick_word_index(rows_k, sched, nb, w, lane);
        for (std::size_t i = 0; i < 8; ++i) {
          const Cell c = table[lane][i];
          const std::size_t k = w * sched.k_rows_per_load() + c.row;
          const std::size_t n = nb * kMmaN + c.col;
          order[dst * 8 + i] = natural_word_index(rows_k, k, n) * 8 + n % kCodesPerWord;
        }
      }
  return Permutation(std::move(order));
}

/// Scales and zeros stay in natural column order; the kernel indexes them
/// by the fragment's n coordinate.
inline QuantParams reorder_quant_params(const QuantParams &params, std::size_t cols_n) {
  if (params.cols_n != cols_n)
    throw ShapeError("quant params column count does not match cols_n");
  return params;
}

} // namespace quick::layout
