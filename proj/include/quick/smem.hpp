// SPDX-License-Identifier: Apache-2.0
/**
 * @file   smem.hpp
 * @brief  Banked shared-memory model, access traces and conflict counting.
 *
 * 32 banks, 4 bytes wide; address a lives in bank (a / 4) % 32. A warp
 * access of w bytes per lane is split into phases of 128 / w lanes (8 lanes
 * for 128-bit, 32 lanes for 32-bit). A phase needs one wavefront per
 * distinct 4-byte word in its busiest bank, so its conflict count is
 * max over banks (distinct words - 1). Lanes reading the same word are a
 * broadcast and cost nothing.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/schedule.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace quick::sim {

inline constexpr std::size_t kBankCount = 32;
inline constexpr std::size_t kBankWidth = 4;
inline constexpr std::size_t kPhaseBytes = kBankCount * kBankWidth;

class SharedMemoryModel {
public:
  explicit SharedMemoryModel(std::size_t bytes) : data_(bytes, 0) {}

  std::size_t size() const { return data_.size(); }

  static constexpr std::size_t bank_of(std::size_t address) { return (address / kBankWidth) % kBankCount; }

  void store(std::size_t address, std::span<const std::uint8_t> bytes) {
    check(address, bytes.size());
    std::memcpy(data_.data() + address, bytes.data(), bytes.size());
  }

  void load(std::size_t address, std::span<std::uint8_t> bytes) const {
    check(address, bytes.size());
    std::memcpy(bytes.data(), data_.data() + address, bytes.size());
  }

  std::uint16_t load_u16(std::size_t address) const {
    std::array<std::uint8_t, 2> b{};
    load(address, b);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

private:
  void check(std::size_t address, std::size_t width) const {
    if (address > data_.size() || width > data_.size() - address)
      throw BoundsError("shared memory access [" + std::to_string(address) + ", " + std::to_string(address + width) +
                        ") outside " + std::to_string(data_.size()) + " bytes");
  }

  std::vector<std::uint8_t> data_;
};

enum class AccessKind { store, load };

struct Access {
  std::size_t phase = 0;
  std::size_t lane = 0;
  std::size_t address = 0;
  std::size_t width = 0;
  AccessKind kind = AccessKind::load;
};

/// Ordered record of weight-path shared-memory traffic. Phase ids are
/// unique across the whole trace.
class BankTrace {
public:
  std::size_t new_phase() { return next_phase_++; }
  void record(const Access &a) { accesses_.push_back(a); }
  const std::vector<Access> &accesses() const { return accesses_; }
  bool empty() const { return accesses_.empty(); }
  std::size_t phases() const { return next_phase_; }

  std::size_t count(AccessKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(accesses_.begin(), accesses_.end(), [kind](const Access &a) { return a.kind == kind; }));
  }

private:
  std::vector<Access> accesses_;
  std::size_t next_phase_ = 0;
};

struct ProblemShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;

  std::string to_text() const {
    return std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(k);
  }
  friend bool operator==(const ProblemShape &, const ProblemShape &) = default;
};

struct ConflictReport {
  std::string pipeline;
  ProblemShape shape;
  std::size_t writeback_store_conflicts = 0;
  std::size_t ldmatrix_load_conflicts = 0;
  std::size_t store_phases = 0;
  std::size_t load_phases = 0;

  std::size_t total_phases() const { return store_phases + load_phases; }
  std::size_t total_conflicts() const { return writeback_store_conflicts + ldmatrix_load_conflicts; }

  /// One key=value record per line; field names are stable.
  std::string to_text() const {
    std::ostringstream os;
    os << "pipeline=" << pipeline << " problem=" << shape.to_text()
       << " writeback_store_conflicts=" << writeback_store_conflicts
       << " ldmatrix_load_conflicts=" << ldmatrix_load_conflicts << " total_phases=" << total_phases();
    return os.str();
  }

  static std::string csv_header() {
    return "pipeline,m,n,k,writeback_store_conflicts,ldmatrix_load_conflicts,total_phases";
  }
  std::string to_csv() const {
    std::ostringstream os;
    os << pipeline << ',' << shape.m << ',' << shape.n << ',' << shape.k << ',' << writeback_store_conflicts << ','
       << ldmatrix_load_conflicts << ',' << total_phases();
    return os.str();
  }
};

/// Conflicts of a single phase given its accesses.
inline std::size_t phase_conflicts(std::span<const Access> phase) {
  std::array<std::set<std::size_t>, kBankCount> words;
  for (const Access &a : phase) {
    if (a.width == 0)
      continue;
    for (std::size_t w = a.address / kBankWidth; w <= (a.address + a.width - 1) / kBankWidth; ++w)
      words[w % kBankCount].insert(w);
  }
  std::size_t busiest = 0;
  for (const auto &s : words)
    busiest = std::max(busiest, s.size());
  return busiest > 0 ? busiest - 1 : 0;
}

inline ConflictReport conflict_count(const BankTrace &trace) {
  std::map<std::size_t, std::vector<Access>> by_phase;
  for (const Access &a : trace.accesses())
    by_phase[a.phase].push_back(a);

  ConflictReport report;
  for (const auto &[phase, accesses] : by_phase) {
    const std::size_t c = phase_conflicts(accesses);
    if (accesses.front().kind == AccessKind::store) {
      report.writeback_store_conflicts += c;
      ++report.store_phases;
    } else {
      report.ldmatrix_load_conflicts += c;
      ++report.load_phases;
    }
  }
  return report;
}

/**
 * Warp-wide store of `width` bytes per lane. `addresses[l]` and
 * `data[l * width ...]` belong to lane l. Lanes are split into phases of
 * kPhaseBytes / width and every phase is recorded in `trace`.
 */
inline void warp_store(SharedMemoryModel &smem, BankTrace &trace, std::span<const std::size_t, kWarpSize> addresses,
                       std::span<const std::uint8_t> data, std::size_t width) {
  if (width == 0 || width > 16 || kPhaseBytes % width != 0)
    throw BoundsError("per-lane access width must be 1, 2, 4, 8 or 16 bytes");
  if (data.size() != width * kWarpSize)
    throw BoundsError("warp_store: data size does not match 32 lanes x width");
  const std::size_t lanes_per_phase = std::min(kWarpSize, kPhaseBytes / width);
  std::size_t phase = 0;
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    if (lane % lanes_per_phase == 0)
      phase = trace.new_phase();
    smem.store(addresses[lane], data.subspan(lane * width, width));
    trace.record(Access{phase, lane, addresses[lane], width, AccessKind::store});
  }
}

} // namespace quick::sim
