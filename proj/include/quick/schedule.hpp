// SPDX-License-Identifier: Apache-2.0
/**
 * @file   schedule.hpp
 * @brief  Per-warp loop schedule shared by the interleaver and the simulator.
 */
#pragma once

#include "quick/error.hpp"

#include <cstddef>
#include <string>

namespace quick {

inline constexpr std::size_t kWarpSize = 32;
inline constexpr std::size_t kMmaM = 16;
inline constexpr std::size_t kMmaN = 8;
inline constexpr std::size_t kMmaK = 16;

enum class LoopOrder { k_innermost };

/**
 * Warp tile geometry. tile_m and tile_n are integer multiples of the
 * 16x8x16 mma shape; tile_k is the mma K itself, and K-repetition is
 * expressed through k_tiles_per_load (two k-tiles per 32-bit weight word).
 *
 * tile_n decides how many 8-column blocks a lane fetches per k step, and so
 * how many consecutive words each lane owns in the interleaved stream.
 */
struct KernelSchedule {
  std::size_t tile_m = kMmaM;
  std::size_t tile_n = kMmaN;
  std::size_t tile_k = kMmaK;
  std::size_t k_tiles_per_load = 2;
  LoopOrder loop_order = LoopOrder::k_innermost;

  std::size_t n_blocks_per_tile() const { return tile_n / kMmaN; }
  std::size_t k_rows_per_load() const { return tile_k * k_tiles_per_load; }

  void validate() const {
    if (tile_m == 0 || tile_m % kMmaM != 0)
      throw ShapeError("schedule tile_m must be a positive multiple of 16");
    if (tile_n == 0 || tile_n % kMmaN != 0)
      throw ShapeError("schedule tile_n must be a positive multiple of 8");
    if (tile_k != kMmaK)
      throw ShapeError("schedule tile_k must equal the mma K of 16");
    if (k_tiles_per_load != 2)
      throw ShapeError("schedule k_tiles_per_load must be 2 (8 codes per word, 4 per k-tile)");
  }

  friend bool operator==(const KernelSchedule &, const KernelSchedule &) = default;
};

} // namespace quick
