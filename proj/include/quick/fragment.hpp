// SPDX-License-Identifier: Apache-2.0
/**
 * @file   fragment.hpp
 * @brief  Per-lane register fragments, ldmatrix emulation and the
 *         mma.m16n8k16 (f16 inputs, f32 accumulators) emulation.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/half.hpp"
#include "quick/layout.hpp"
#include "quick/smem.hpp"

#include <array>
#include <bitset>
#include <cstddef>
#include <span>
#include <string>

namespace quick::sim {

/// Registers of one warp, PerLane elements per lane. Reading an element
/// nobody wrote is a contract violation.
template <typename T, std::size_t PerLane> class Fragment {
public:
  static constexpr std::size_t per_lane = PerLane;

  void set(std::size_t lane, std::size_t slot, T v) {
    check(lane, slot);
    regs_[lane][slot] = v;
    populated_.set(lane * PerLane + slot);
  }

  const T &get(std::size_t lane, std::size_t slot) const {
    check(lane, slot);
    if (!populated_.test(lane * PerLane + slot))
      throw ContractError("fragment register lane " + std::to_string(lane) + " slot " + std::to_string(slot) +
                          " read before being populated");
    return regs_[lane][slot];
  }

  bool populated(std::size_t lane, std::size_t slot) const { return populated_.test(lane * PerLane + slot); }
  bool complete() const { return populated_.all(); }

  friend bool operator==(const Fragment &, const Fragment &) = default;

private:
  static void check(std::size_t lane, std::size_t slot) {
    if (lane >= kWarpSize || slot >= PerLane)
      throw BoundsError("fragment index (" + std::to_string(lane) + ", " + std::to_string(slot) + ") out of range");
  }

  std::array<std::array<T, PerLane>, kWarpSize> regs_{};
  std::bitset<kWarpSize * PerLane> populated_;
};

using FragmentA = Fragment<Half, 8>;
using FragmentB = Fragment<Half, 4>;
using FragmentC = Fragment<float, 4>;

struct FragmentSet {
  FragmentA a;
  FragmentB b;
  FragmentC c;
};

/**
 * d = c + a * b over one 16x8x16 tile. Operands are gathered through the
 * fragment coordinate maps; products of two binary16 values are exact in
 * single precision and are accumulated in ascending k.
 */
inline FragmentC emulate_mma_16x8x16(const FragmentA &a, const FragmentB &b, const FragmentC &c) {
  std::array<std::array<float, kMmaK>, kMmaM> am{};
  std::array<std::array<float, kMmaN>, kMmaK> bm{};
  std::array<std::array<float, kMmaN>, kMmaM> cm{};
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const auto amap = layout::mma_a_map_16x16(lane);
    for (std::size_t i = 0; i < 8; ++i)
      am[amap[i].row][amap[i].col] = a.get(lane, i).to_float();
    for (const auto &coord : layout::mma_b_map_16x8(lane))
      bm[coord.k][coord.n] = b.get(lane, coord.slot).to_float();
    const auto cmap = layout::mma_c_map_16x8(lane);
    for (std::size_t i = 0; i < 4; ++i)
      cm[cmap[i].row][cmap[i].col] = c.get(lane, i);
  }

  for (std::size_t m = 0; m < kMmaM; ++m)
    for (std::size_t n = 0; n < kMmaN; ++n) {
      float acc = cm[m][n];
      for (std::size_t k = 0; k < kMmaK; ++k)
        acc += am[m][k] * bm[k][n];
      cm[m][n] = acc;
    }

  FragmentC d;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const auto cmap = layout::mma_c_map_16x8(lane);
    for (std::size_t i = 0; i < 4; ++i)
      d.set(lane, i, cm[cmap[i].row][cmap[i].col]);
  }
  return d;
}

template <std::size_t Blocks> using LdmatrixRegs = std::array<std::array<Half, 2 * Blocks>, kWarpSize>;

/**
 * ldmatrix.sync.aligned.m8n8.x{Blocks}.b16, optionally .trans.
 *
 * row_addresses holds 8 row addresses per block (16-byte aligned rows of
 * eight b16 values). Without .trans lane l receives row l/4, columns
 * 2(l%4) and 2(l%4)+1 of each block; with .trans it receives the
 * transposed pair. Each block is one phase; the trace attributes granule g
 * of row r to lane 4r + g.
 */
template <std::size_t Blocks>
LdmatrixRegs<Blocks> emulate_ldmatrix(const SharedMemoryModel &smem, std::span<const std::size_t, 8 * Blocks> row_addresses,
                                      bool transpose, BankTrace &trace) {
  static_assert(Blocks == 1 || Blocks == 2 || Blocks == 4, "ldmatrix loads 1, 2 or 4 matrices");
  LdmatrixRegs<Blocks> regs{};
  for (std::size_t b = 0; b < Blocks; ++b) {
    std::array<std::array<Half, 8>, 8> tile{};
    const std::size_t phase = trace.new_phase();
    for (std::size_t r = 0; r < 8; ++r) {
      const std::size_t addr = row_addresses[8 * b + r];
      if (addr % 16 != 0)
        throw BoundsError("ldmatrix row address " + std::to_string(addr) + " is not 16-byte aligned");
      for (std::size_t c = 0; c < 8; ++c)
        tile[r][c] = Half::from_bits(smem.load_u16(addr + 2 * c));
      for (std::size_t g = 0; g < 4; ++g)
        trace.record(Access{phase, 4 * r + g, addr + kBankWidth * g, kBankWidth, AccessKind::load});
    }
    for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
      const auto cells = layout::ldmatrix_map_8x8(lane);
      for (std::size_t i = 0; i < 2; ++i) {
        const auto cell = cells[i];
        regs[lane][2 * b + i] = transpose ? tile[cell.col][cell.row] : tile[cell.row][cell.col];
      }
    }
  }
  return regs;
}

/// Two transposed blocks stacked on K form the mma B operand.
inline FragmentB to_fragment_b(const LdmatrixRegs<2> &regs) {
  FragmentB b;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane)
    for (std::size_t slot = 0; slot < 4; ++slot)
      b.set(lane, slot, regs[lane][slot]);
  return b;
}

} // namespace quick::sim
