// SPDX-License-Identifier: Apache-2.0
/**
 * @file   costmodel.hpp
 * @brief  First-order model of the block tile trade-off: shared-memory
 *         footprint, theoretical active warps and DRAM traffic for the
 *         baseline and QUICK kernels.
 *
 * The model is cache-less with perfect reuse inside a block tile. The
 * baseline stages both the activation and the dequantized weight tile in
 * shared memory; QUICK stages activations only.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/schedule.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>

namespace quick::cost {

enum class Variant { baseline, quick };

inline std::string_view to_string(Variant v) { return v == Variant::baseline ? "baseline" : "quick"; }

struct TileConfig {
  std::size_t block_tile_m = 64;
  std::size_t block_tile_n = 64;
  std::size_t block_tile_k = 64;
  std::size_t warps_per_block = 4;
  std::size_t pipeline_stages = 1;
  std::size_t regs_per_thread = 128;
  Variant variant = Variant::baseline;

  void validate() const {
    if (block_tile_m == 0 || block_tile_m % kMmaM != 0 || block_tile_n == 0 || block_tile_n % kMmaN != 0 ||
        block_tile_k == 0 || block_tile_k % kMmaK != 0)
      throw ShapeError("block tiles must be positive multiples of the 16x8x16 warp tile");
    if (pipeline_stages == 0)
      throw ShapeError("pipeline_stages must be >= 1");
    if (warps_per_block == 0 || regs_per_thread == 0)
      throw ShapeError("warps_per_block and regs_per_thread must be positive");
  }

  std::string tiles_text() const {
    return std::to_string(block_tile_m) + "x" + std::to_string(block_tile_n) + "x" + std::to_string(block_tile_k);
  }
};

struct HardwareProfile {
  std::string name;
  std::size_t smem_per_sm = 0;
  std::size_t regs_per_sm = 0;
  std::size_t max_warps_per_sm = 0;
  std::size_t lanes_per_warp = kWarpSize;

  void validate() const {
    if (smem_per_sm == 0 || regs_per_sm == 0 || max_warps_per_sm == 0 || lanes_per_warp == 0)
      throw ShapeError("hardware profile fields must be positive");
  }
};

/// Model parameters for three device classes; not measurements of any GPU.
inline const std::array<HardwareProfile, 3> &hardware_presets() {
  static const std::array<HardwareProfile, 3> presets{{
      {"consumer", 102400, 65536, 48, kWarpSize},
      {"workstation", 65536, 65536, 32, kWarpSize},
      {"datacenter", 167936, 65536, 64, kWarpSize},
  }};
  return presets;
}

inline const HardwareProfile &hardware_preset(std::string_view name) {
  for (const auto &p : hardware_presets())
    if (p.name == name)
      return p;
  throw std::invalid_argument("unknown hardware preset '" + std::string(name) + "'");
}

struct GemmProblem {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;

  void validate() const {
    if (m == 0 || n == 0 || k == 0)
      throw ShapeError("problem dimensions must be positive");
  }
};

inline std::size_t smem_bytes(const TileConfig &cfg) {
  cfg.validate();
  const std::size_t act = cfg.block_tile_m * cfg.block_tile_k;
  const std::size_t weights = cfg.variant == Variant::baseline ? cfg.block_tile_k * cfg.block_tile_n : 0;
  return cfg.pipeline_stages * (act + weights) * 2;
}

struct Occupancy {
  std::size_t blocks_by_smem = 0;
  std::size_t blocks_by_regs = 0;
  std::size_t active_warps = 0;
  std::string limiter;    // "smem", "regs" or "warp_cap"
  std::string diagnostic; // non-empty when the config cannot launch
  bool feasible() const { return diagnostic.empty(); }
};

inline Occupancy active_warps(const TileConfig &cfg, const HardwareProfile &hw) {
  hw.validate();
  Occupancy occ;
  const std::size_t smem = smem_bytes(cfg);
  const std::size_t regs_per_block = cfg.regs_per_thread * hw.lanes_per_warp * cfg.warps_per_block;
  occ.blocks_by_smem = hw.smem_per_sm / smem;
  occ.blocks_by_regs = hw.regs_per_sm / regs_per_block;

  if (smem > hw.smem_per_sm) {
    occ.limiter = "smem";
    occ.diagnostic = "infeasible: block needs " + std::to_string(smem) + " B shared memory, SM has " +
                     std::to_string(hw.smem_per_sm);
    return occ;
  }
  if (regs_per_block > hw.regs_per_sm) {
    occ.limiter = "regs";
    occ.diagnostic = "infeasible: block needs " + std::to_string(regs_per_block) + " registers, SM has " +
                     std::to_string(hw.regs_per_sm);
    return occ;
  }

  const std::size_t blocks = std::min(occ.blocks_by_smem, occ.blocks_by_regs);
  occ.limiter = occ.blocks_by_smem <= occ.blocks_by_regs ? "smem" : "regs";
  occ.active_warps = blocks * cfg.warps_per_block;
  if (occ.active_warps > hw.max_warps_per_sm) {
    occ.active_warps = hw.max_warps_per_sm;
    occ.limiter = "warp_cap";
  }
  return occ;
}

struct DramBytes {
  std::uint64_t activations = 0;
  std::uint64_t weights = 0;
  std::uint64_t quant_params = 0;
  std::uint64_t output = 0;
  std::uint64_t total = 0;
};

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

/**
 * Activations are re-read once per column tile, packed 4-bit weights and
 * their params (2-byte scale + 1-byte zero per group and column) once per
 * row tile, output written once. The layout variant does not change the
 * weight volume.
 */
inline DramBytes dram_traffic(const GemmProblem &p, const TileConfig &cfg, std::size_t group_size = 128) {
  p.validate();
  cfg.validate();
  if (group_size == 0)
    throw ShapeError("group_size must be positive");
  const std::uint64_t m = p.m, n = p.n, k = p.k;
  DramBytes d;
  d.activations = ceil_div(n, cfg.block_tile_n) * m * k * 2;
  d.weights = ceil_div(m, cfg.block_tile_m) * k * n / 2;
  d.quant_params = ceil_div(m, cfg.block_tile_m) * ceil_div(k, group_size) * n * 3;
  d.output = m * n * 2;
  d.total = d.activations + d.weights + d.quant_params + d.output;
  return d;
}

struct CostReport {
  std::string hardware;
  GemmProblem problem;
  TileConfig config;
  std::size_t smem_bytes_per_block = 0;
  Occupancy occupancy;
  DramBytes dram;

  /// key=value record on one line, same convention as the conflict report.
  std::string to_text() const {
    std::ostringstream os;
    os << "variant=" << to_string(config.variant) << " hw=" << hardware << " problem=" << problem.m << 'x' << problem.n
       << 'x' << problem.k << " tiles=" << config.tiles_text() << " warps_per_block=" << config.warps_per_block
       << " stages=" << config.pipeline_stages << " regs_per_thread=" << config.regs_per_thread
       << " smem_bytes_per_block=" << smem_bytes_per_block << " active_warps=" << occupancy.active_warps
       << " limiter=" << occupancy.limiter << " dram_activations=" << dram.activations
       << " dram_weights=" << dram.weights << " dram_quant_params=" << dram.quant_params
       << " dram_output=" << dram.output << " dram_total=" << dram.total;
    if (!occupancy.feasible())
      os << " diagnostic=\"" << occupancy.diagnostic << '"';
    return os.str();
  }

  static std::string csv_header() {
    return "variant,hw,m,n,k,tile_m,tile_n,tile_k,warps_per_block,stages,regs_per_thread,smem_bytes_per_block,"
           "active_warps,limiter,dram_activations,dram_weights,dram_quant_params,dram_output,dram_total";
  }
  std::string to_csv() const {
    std::ostringstream os;
    os << to_string(config.variant) << ',' << hardware << ',' << problem.m << ',' << problem.n << ',' << problem.k << ','
       << config.block_tile_m << ',' << config.block_tile_n << ',' << config.block_tile_k << ','
       << config.warps_per_block << ',' << config.pipeline_stages << ',' << config.regs_per_thread << ','
       << smem_bytes_per_block << ',' << occupancy.active_warps << ',' << occupancy.limiter << ','
       << dram.activations << ',' << dram.weights << ',' << dram.quant_params << ',' << dram.output << ','
       << dram.total;
    return os.str();
  }
};

inline CostReport evaluate(const GemmProblem &p, const TileConfig &cfg, const HardwareProfile &hw,
                           std::size_t group_size = 128) {
  return CostReport{hw.name, p, cfg, smem_bytes(cfg), active_warps(cfg, hw), dram_traffic(p, cfg, group_size)};
}

} // namespace quick::cost
