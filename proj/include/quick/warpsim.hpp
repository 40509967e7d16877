// SPDX-License-Identifier: Apache-2.0
/**
 * @file   warpsim.hpp
 * @brief  Functional single-warp emulation of the mixed-precision GEMM
 *         inner loop, baseline and QUICK, plus the reference GEMM oracle.
 *
 * Baseline: load natural words -> parallel dequant -> 128-bit write-back to
 * shared memory -> ldmatrix.x2.trans -> mma.
 * QUICK: load interleaved words straight into registers -> parallel dequant
 * -> mma. No shared-memory traffic on the weight path.
 *
 * Both accumulate every output element over k in ascending order, so the
 * results are bit-identical to each other and to reference_gemm.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/fragment.hpp"
#include "quick/half.hpp"
#include "quick/layout.hpp"
#include "quick/quantcore.hpp"
#include "quick/rng.hpp"
#include "quick/schedule.hpp"
#include "quick/smem.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace quick::sim {

/// M x K activations, row-major binary16.
struct ActivationMatrix {
  std::size_t rows_m = 0;
  std::size_t cols_k = 0;
  std::vector<Half> values;

  Half at(std::size_t m, std::size_t k) const { return values[m * cols_k + k]; }
};

/// M x N single-precision accumulators, row-major.
struct AccumMatrix {
  std::size_t rows_m = 0;
  std::size_t cols_n = 0;
  std::vector<float> values;

  AccumMatrix() = default;
  AccumMatrix(std::size_t m, std::size_t n) : rows_m(m), cols_n(n), values(m * n, 0.0f) {}

  float &at(std::size_t m, std::size_t n) { return values[m * cols_n + n]; }
  float at(std::size_t m, std::size_t n) const { return values[m * cols_n + n]; }
};

/// Seeded activations uniform on [-1, 1), rounded to binary16.
inline ActivationMatrix random_activations(std::size_t m, std::size_t k, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ActivationMatrix a{m, k, std::vector<Half>(m * k)};
  for (Half &h : a.values)
    h = Half::from_float(static_cast<float>(rng.uniform(-1.0, 1.0)));
  return a;
}

/// Triple loop, binary16 inputs widened to float, ascending-k accumulation.
inline AccumMatrix reference_gemm(const ActivationMatrix &a, const WeightMatrix &w,
                                  const std::optional<AccumMatrix> &c0 = std::nullopt) {
  if (a.cols_k != w.rows_k || a.values.size() != a.rows_m * a.cols_k)
    throw ShapeError("reference_gemm: activation K " + std::to_string(a.cols_k) + " does not match weight K " +
                     std::to_string(w.rows_k));
  AccumMatrix c = c0.value_or(AccumMatrix(a.rows_m, w.cols_n));
  if (c.rows_m != a.rows_m || c.cols_n != w.cols_n)
    throw ShapeError("reference_gemm: accumulator shape mismatch");
  for (std::size_t m = 0; m < a.rows_m; ++m)
    for (std::size_t n = 0; n < w.cols_n; ++n) {
      float acc = c.at(m, n);
      for (std::size_t k = 0; k < a.cols_k; ++k)
        acc += a.at(m, k).to_float() * w.at(k, n);
      c.at(m, n) = acc;
    }
  return c;
}

/// Row-major dequantized weight slab in shared memory, `tile_n` columns
/// wide with `row_stride_bytes` between rows.
struct BaselineSmemLayout {
  std::string name = "unpadded";
  std::size_t tile_n = 64;
  std::size_t row_stride_bytes = 128;

  static BaselineSmemLayout unpadded(std::size_t tile_n = 64) { return {"unpadded", tile_n, tile_n * 2}; }
  /// One 16-byte pad per row keeps ldmatrix rows aligned while rotating banks.
  static BaselineSmemLayout padded(std::size_t tile_n = 64) { return {"padded", tile_n, tile_n * 2 + 16}; }

  static BaselineSmemLayout preset(const std::string &name) {
    if (name == "unpadded")
      return unpadded();
    if (name == "padded")
      return padded();
    throw std::invalid_argument("unknown shared-memory layout preset '" + name + "'");
  }

  void validate() const {
    if (tile_n == 0 || tile_n % kMmaN != 0)
      throw ShapeError("smem layout tile_n must be a positive multiple of 8");
    if (row_stride_bytes < tile_n * 2 || row_stride_bytes % 16 != 0)
      throw ShapeError("smem layout row stride must hold a row and keep 16-byte alignment");
  }
};

struct PipelineResult {
  AccumMatrix c;
  ConflictReport report;
  BankTrace trace;
};

namespace detail {

inline void check_problem(const ActivationMatrix &a, const PackedWeights &p, const QuantParams &q,
                          const KernelSchedule &sched) {
  layout::check_quick_shape(p.rows_k, p.cols_n, sched);
  if (p.words.size() != p.rows_k * p.cols_n / kCodesPerWord)
    throw ShapeError("word count does not match shape");
  if (a.cols_k != p.rows_k || a.values.size() != a.rows_m * a.cols_k)
    throw ShapeError("activation K " + std::to_string(a.cols_k) + " does not match weight K " + std::to_string(p.rows_k));
  if (a.rows_m == 0 || a.rows_m % sched.tile_m != 0)
    throw ShapeError("M must be a positive multiple of schedule tile_m " + std::to_string(sched.tile_m));
  q.validate(p.rows_k, p.cols_n);
}

inline FragmentA gather_a(const ActivationMatrix &a, std::size_t m0, std::size_t k0) {
  FragmentA frag;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const auto cells = layout::mma_a_map_16x16(lane);
    for (std::size_t i = 0; i < 8; ++i)
      frag.set(lane, i, a.at(m0 + cells[i].row, k0 + cells[i].col));
  }
  return frag;
}

inline FragmentC gather_c(const AccumMatrix &c, std::size_t m0, std::size_t n0) {
  FragmentC frag;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const auto cells = layout::mma_c_map_16x8(lane);
    for (std::size_t i = 0; i < 4; ++i)
      frag.set(lane, i, c.at(m0 + cells[i].row, n0 + cells[i].col));
  }
  return frag;
}

inline void scatter_c(const FragmentC &frag, AccumMatrix &c, std::size_t m0, std::size_t n0) {
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const auto cells = layout::mma_c_map_16x8(lane);
    for (std::size_t i = 0; i < 4; ++i)
      c.at(m0 + cells[i].row, n0 + cells[i].col) = frag.get(lane, i);
  }
}

/// Runs one k-tile of mma for every 16-row block of M at column block n0.
inline void mma_column(const ActivationMatrix &a, const FragmentB &b, AccumMatrix &c, std::size_t k0, std::size_t n0) {
  for (std::size_t m0 = 0; m0 < a.rows_m; m0 += kMmaM)
    scatter_c(emulate_mma_16x8x16(gather_a(a, m0, k0), b, gather_c(c, m0, n0)), c, m0, n0);
}

inline AccumMatrix initial_c(const ActivationMatrix &a, std::size_t cols_n, const std::optional<AccumMatrix> &c0) {
  AccumMatrix c = c0.value_or(AccumMatrix(a.rows_m, cols_n));
  if (c.rows_m != a.rows_m || c.cols_n != cols_n)
    throw ShapeError("initial accumulator shape mismatch");
  return c;
}

} // namespace detail

/**
 * B fragments for k-tiles 2*kpair and 2*kpair+1 of column block nb, built
 * the QUICK way: each lane loads its interleaved word directly and runs the
 * parallel dequantizer; slots 0-3 feed the first tile, 4-7 the second.
 */
inline std::array<FragmentB, 2> quick_b_fragments(const PackedWeights &quick, const QuantParams &q,
                                                  const KernelSchedule &sched, std::size_t nb, std::size_t kpair) {
  const layout::TileTable &slots = layout::slot_gather_table();
  std::array<FragmentB, 2> frags;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    const std::uint32_t word = quick.words[layout::quick_word_index(quick.rows_k, sched, nb, kpair, lane)];
    std::array<Half, 8> scales;
    std::array<std::uint8_t, 8> zeros;
    for (std::size_t s = 0; s < 8; ++s) {
      const std::size_t k = kpair * sched.k_rows_per_load() + slots[lane][s].row;
      const std::size_t n = nb * kMmaN + slots[lane][s].col;
      scales[s] = q.scale_for_row(k, n);
      zeros[s] = q.zero_for_row(k, n);
    }
    const auto values = dequant_word_parallel(word, std::span<const Half, 8>(scales), std::span<const std::uint8_t, 8>(zeros));
    for (std::size_t s = 0; s < 8; ++s)
      frags[s / 4].set(lane, s % 4, values[s]);
  }
  return frags;
}

/**
 * B fragments for the same tile built the baseline way from dequantized
 * weights: the 32 x 8 tile is written row-major (16-byte rows) into shared
 * memory and read back with two ldmatrix.x2.trans.
 */
inline std::array<FragmentB, 2> ldmatrix_b_fragments(const WeightMatrix &dequantized, std::size_t nb,
                                                     std::size_t kpair, BankTrace &trace) {
  constexpr std::size_t rows = 2 * kMmaK;
  constexpr std::size_t row_bytes = kMmaN * 2;
  SharedMemoryModel smem(rows * row_bytes);
  for (std::size_t r = 0; r < rows; ++r) {
    std::array<std::uint8_t, row_bytes> bytes{};
    for (std::size_t c = 0; c < kMmaN; ++c) {
      const Half h = Half::from_float(dequantized.at(kpair * rows + r, nb * kMmaN + c));
      bytes[2 * c] = static_cast<std::uint8_t>(h.bits & 0xFF);
      bytes[2 * c + 1] = static_cast<std::uint8_t>(h.bits >> 8);
    }
    smem.store(r * row_bytes, bytes);
  }
  std::array<FragmentB, 2> frags;
  for (std::size_t t = 0; t < 2; ++t) {
    std::array<std::size_t, 16> addrs{};
    for (std::size_t r = 0; r < 16; ++r)
      addrs[r] = (t * kMmaK + r) * row_bytes;
    frags[t] = to_fragment_b(emulate_ldmatrix<2>(smem, std::span<const std::size_t, 16>(addrs), true, trace));
  }
  return frags;
}

inline PipelineResult run_baseline_pipeline(const ActivationMatrix &a, const PackedWeights &natural, const QuantParams &q,
                                            const KernelSchedule &sched = {},
                                            const BaselineSmemLayout &smem_layout = BaselineSmemLayout::unpadded(),
                                            const std::optional<AccumMatrix> &c0 = std::nullopt) {
  if (natural.layout != Layout::natural)
    throw LayoutError("baseline pipeline consumes the natural layout");
  detail::check_problem(a, natural, q, sched);
  smem_layout.validate();

  const std::size_t K = natural.rows_k;
  const std::size_t N = natural.cols_n;
  const std::size_t chunk = sched.k_rows_per_load();
  const layout::Permutation &order = layout::dequant_order_permutation();
  const layout::Permutation unorder = order.inverse();

  PipelineResult out;
  out.c = detail::initial_c(a, N, c0);
  SharedMemoryModel smem(chunk * smem_layout.row_stride_bytes);

  for (std::size_t n0 = 0; n0 < N; n0 += smem_layout.tile_n) {
    const std::size_t slab_blocks = std::min(smem_layout.tile_n, N - n0) / kMmaN;
    for (std::size_t k0 = 0; k0 < K; k0 += chunk) {
      // write-back: one store instruction per column block, lane l owns row k0 + l
      for (std::size_t jb = 0; jb < slab_blocks; ++jb) {
        const std::size_t nb = n0 / kMmaN + jb;
        std::array<std::size_t, kWarpSize> addrs{};
        std::vector<std::uint8_t> data(kWarpSize * 16);
        for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
          const std::size_t k = k0 + lane;
          const std::uint32_t word = natural.words[natural_word_index(K, k, nb * kMmaN)];
          std::array<Half, 8> scales;
          std::array<std::uint8_t, 8> zeros;
          for (std::size_t s = 0; s < 8; ++s) {
            scales[s] = q.scale_for_row(k, nb * kMmaN + order[s]);
            zeros[s] = q.zero_for_row(k, nb * kMmaN + order[s]);
          }
          const auto values =
              dequant_word_parallel(word, std::span<const Half, 8>(scales), std::span<const std::uint8_t, 8>(zeros));
          // registers back into column order before the 128-bit store
          for (std::size_t col = 0; col < 8; ++col) {
            const Half h = values[unorder[col]];
            data[lane * 16 + 2 * col] = static_cast<std::uint8_t>(h.bits & 0xFF);
            data[lane * 16 + 2 * col + 1] = static_cast<std::uint8_t>(h.bits >> 8);
          }
          addrs[lane] = lane * smem_layout.row_stride_bytes + jb * kMmaN * 2;
        }
        warp_store(smem, out.trace, addrs, data, 16);
      }
      for (std::size_t jb = 0; jb < slab_blocks; ++jb) {
        for (std::size_t t = 0; t < sched.k_tiles_per_load; ++t) {
          std::array<std::size_t, 16> row_addrs{};
          for (std::size_t r = 0; r < 16; ++r)
            row_addrs[r] = (t * kMmaK + r) * smem_layout.row_stride_bytes + jb * kMmaN * 2;
          const FragmentB b =
              to_fragment_b(emulate_ldmatrix<2>(smem, std::span<const std::size_t, 16>(row_addrs), true, out.trace));
          detail::mma_column(a, b, out.c, k0 + t * kMmaK, n0 + jb * kMmaN);
        }
      }
    }
  }

  const ConflictReport counts = conflict_count(out.trace);
  out.report = counts;
  out.report.pipeline = "baseline";
  out.report.shape = ProblemShape{a.rows_m, N, K};
  return out;
}

inline PipelineResult run_quick_pipeline(const ActivationMatrix &a, const PackedWeights &quick, const QuantParams &q,
                                         const KernelSchedule &sched = {},
                                         const std::optional<AccumMatrix> &c0 = std::nullopt) {
  if (quick.layout != Layout::quick)
    throw LayoutError("quick pipeline consumes the quick layout; interleave first");
  detail::check_problem(a, quick, q, sched);

  const std::size_t K = quick.rows_k;
  const std::size_t N = quick.cols_n;
  const std::size_t r = sched.n_blocks_per_tile();

  PipelineResult out;
  out.c = detail::initial_c(a, N, c0);
  for (std::size_t nt = 0; nt < N / sched.tile_n; ++nt)
    for (std::size_t w = 0; w < K / sched.k_rows_per_load(); ++w)
      for (std::size_t j = 0; j < r; ++j) {
        const std::size_t nb = nt * r + j;
        const auto frags = quick_b_fragments(quick, q, sched, nb, w);
        for (std::size_t t = 0; t < sched.k_tiles_per_load; ++t)
          detail::mma_column(a, frags[t], out.c, w * sched.k_rows_per_load() + t * kMmaK, nb * kMmaN);
      }

  out.report = conflict_count(out.trace);
  out.report.pipeline = "quick";
  out.report.shape = ProblemShape{a.rows_m, N, K};
  return out;
}

struct Mismatch {
  std::size_t m = 0;
  std::size_t n = 0;
  float expected = 0.0f;
  float actual = 0.0f;
};

/// First element whose bit pattern differs, row-major order.
inline std::optional<Mismatch> first_mismatch(const AccumMatrix &expected, const AccumMatrix &actual) {
  if (expected.rows_m != actual.rows_m || expected.cols_n != actual.cols_n)
    throw ShapeError("first_mismatch: shapes differ");
  for (std::size_t m = 0; m < expected.rows_m; ++m)
    for (std::size_t n = 0; n < expected.cols_n; ++n)
      if (std::bit_cast<std::uint32_t>(expected.at(m, n)) != std::bit_cast<std::uint32_t>(actual.at(m, n)))
        return Mismatch{m, n, expected.at(m, n), actual.at(m, n)};
  return std::nullopt;
}

} // namespace quick::sim
