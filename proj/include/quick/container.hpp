// SPDX-License-Identifier: Apache-2.0
/**
 * @file   container.hpp
 * @brief  "QWK1" on-disk container for packed 4-bit weights.
 *
 *   offset 0   4 bytes   magic "QWK1"
 *   offset 4   u32 LE    format version (1)
 *   offset 8   u64 LE    header length in bytes
 *   offset 16  header    JSON object, keys sorted
 *   then       payload   sections; offsets in the header are relative to
 *                        the first payload byte
 *
 * Sections: "words" (u32 LE), "scales" (binary16 LE, group-major then
 * column), "zeros" (u8, same order). The header records shape, group size,
 * layout tag, the schedule tile_n used for quick streams, and optional CRC32
 * digests of the codes in canonical (layout-independent) order: one per
 * 8-column block and one per 32-row band, so a damaged word can be located.
 */
#pragma once

#include "quick/error.hpp"
#include "quick/half.hpp"
#include "quick/layout.hpp"
#include "quick/quantcore.hpp"
#include "quick/schedule.hpp"

#include <json.hpp>
#include <zlib.h>

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace quick::io {

inline constexpr char kMagic[4] = {'Q', 'W', 'K', '1'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kPreambleBytes = 16;
inline constexpr std::size_t kDigestBand = 32;

struct CodeDigests {
  std::vector<std::uint32_t> n_block_crc32;
  std::vector<std::uint32_t> k_band_crc32;
  friend bool operator==(const CodeDigests &, const CodeDigests &) = default;
};

inline CodeDigests compute_digests(std::span<const std::uint8_t> codes, std::size_t rows_k, std::size_t cols_n) {
  CodeDigests d;
  std::vector<std::uint8_t> buf;
  for (std::size_t nb = 0; nb < cols_n / kCodesPerWord; ++nb) {
    buf.clear();
    for (std::size_t k = 0; k < rows_k; ++k)
      for (std::size_t i = 0; i < kCodesPerWord; ++i)
        buf.push_back(codes[k * cols_n + nb * kCodesPerWord + i]);
    d.n_block_crc32.push_back(static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size()))));
  }
  for (std::size_t k0 = 0; k0 < rows_k; k0 += kDigestBand) {
    const std::size_t rows = std::min(kDigestBand, rows_k - k0);
    const std::uint8_t *first = codes.data() + k0 * cols_n;
    d.k_band_crc32.push_back(static_cast<std::uint32_t>(crc32(0L, first, static_cast<uInt>(rows * cols_n))));
  }
  return d;
}

struct DigestMismatch {
  std::size_t n_block = 0;
  std::size_t k_band = 0;
};

/// First (n-block, k-band) cell whose digests both disagree.
inline std::optional<DigestMismatch> locate_damage(const CodeDigests &expected, const CodeDigests &actual) {
  if (expected.n_block_crc32.size() != actual.n_block_crc32.size() ||
      expected.k_band_crc32.size() != actual.k_band_crc32.size())
    throw FormatError("digest tables have different sizes");
  std::optional<std::size_t> nb, kb;
  for (std::size_t i = 0; i < expected.n_block_crc32.size() && !nb; ++i)
    if (expected.n_block_crc32[i] != actual.n_block_crc32[i])
      nb = i;
  for (std::size_t i = 0; i < expected.k_band_crc32.size() && !kb; ++i)
    if (expected.k_band_crc32[i] != actual.k_band_crc32[i])
      kb = i;
  if (!nb && !kb)
    return std::nullopt;
  return DigestMismatch{nb.value_or(0), kb.value_or(0)};
}

struct Container {
  PackedWeights weights;
  QuantParams params;
  KernelSchedule schedule; // meaningful for quick streams
  std::optional<CodeDigests> digests;
};

/// Codes in row-major natural order whatever the stream layout.
inline std::vector<std::uint8_t> canonical_codes(const Container &c) {
  if (c.weights.layout == Layout::quick)
    return unpack_natural(layout::deinterleave_quick(c.weights, c.schedule));
  return unpack_natural(c.weights);
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return v;
}

} // namespace detail

inline std::vector<std::uint8_t> to_bytes(const Container &c) {
  const PackedWeights &w = c.weights;
  check_weight_shape(w.rows_k, w.cols_n);
  if (w.words.size() != w.rows_k * w.cols_n / kCodesPerWord)
    throw ShapeError("word count does not match shape");
  c.params.validate(w.rows_k, w.cols_n);

  const std::size_t words_len = w.words.size() * 4;
  const std::size_t scales_len = c.params.scales.size() * 2;
  const std::size_t zeros_len = c.params.zeros.size();

  nlohmann::json header;
  header["shape"] = {w.rows_k, w.cols_n};
  header["group_size"] = c.params.group_size;
  header["layout_tag"] = std::string(to_string(w.layout));
  if (w.layout == Layout::quick)
    header["schedule"] = {{"tile_n", c.schedule.tile_n}, {"k_tiles_per_load", c.schedule.k_tiles_per_load}};
  header["sections"] = nlohmann::json::array({
      {{"name", "words"}, {"offset", 0}, {"length", words_len}},
      {{"name", "scales"}, {"offset", words_len}, {"length", scales_len}},
      {{"name", "zeros"}, {"offset", words_len + scales_len}, {"length", zeros_len}},
  });
  if (c.digests)
    header["digests"] = {{"n_block_crc32", c.digests->n_block_crc32}, {"k_band_crc32", c.digests->k_band_crc32}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  detail::put_u32(out, kFormatVersion);
  detail::put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + words_len + scales_len + zeros_len);
  for (std::uint32_t word : w.words)
    detail::put_u32(out, word);
  for (Half s : c.params.scales) {
    out.push_back(static_cast<std::uint8_t>(s.bits & 0xFF));
    out.push_back(static_cast<std::uint8_t>(s.bits >> 8));
  }
  out.insert(out.end(), c.params.zeros.begin(), c.params.zeros.end());
  return out;
}

inline Container from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreambleBytes)
    throw FormatError("truncated container: " + std::to_string(bytes.size()) + " bytes");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError("not a QWK1 container (bad magic)");
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != kFormatVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  const std::uint64_t header_len = detail::get_le(bytes, 8, 8);
  if (header_len > bytes.size() - kPreambleBytes)
    throw FormatError("truncated container: header runs past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleBytes,
                                   bytes.begin() + kPreambleBytes + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("corrupt container header: ") + e.what());
  }
  const std::span<const std::uint8_t> payload = bytes.subspan(kPreambleBytes + header_len);

  Container c;
  try {
    const std::size_t rows_k = header.at("shape").at(0).get<std::size_t>();
    const std::size_t cols_n = header.at("shape").at(1).get<std::size_t>();
    try {
      check_weight_shape(rows_k, cols_n);
    } catch (const ShapeError &e) {
      throw FormatError(std::string("container shape invalid: ") + e.what());
    }
    c.weights.rows_k = rows_k;
    c.weights.cols_n = cols_n;
    try {
      c.weights.layout = parse_layout(header.at("layout_tag").get<std::string>());
    } catch (const LayoutError &e) {
      throw FormatError(e.what());
    }
    c.params.group_size = header.at("group_size").get<std::size_t>();
    c.params.cols_n = cols_n;
    if (c.params.group_size < 16 || rows_k % c.params.group_size != 0)
      throw FormatError("container group_size does not divide rows_k");
    if (header.contains("schedule")) {
      c.schedule.tile_n = header["schedule"].at("tile_n").get<std::size_t>();
      c.schedule.k_tiles_per_load = header["schedule"].at("k_tiles_per_load").get<std::size_t>();
    }

    const std::size_t n_words = rows_k * cols_n / kCodesPerWord;
    const std::size_t n_params = (rows_k / c.params.group_size) * cols_n;
    const std::size_t expected[3] = {n_words * 4, n_params * 2, n_params};
    const char *names[3] = {"words", "scales", "zeros"};
    std::size_t offsets[3] = {};
    const auto &sections = header.at("sections");
    if (sections.size() != 3)
      throw FormatError("container must have exactly 3 sections");
    std::size_t payload_end = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto &s = sections.at(i);
      if (s.at("name").get<std::string>() != names[i])
        throw FormatError(std::string("expected section '") + names[i] + "'");
      offsets[i] = s.at("offset").get<std::size_t>();
      const std::size_t len = s.at("length").get<std::size_t>();
      if (len != expected[i])
        throw FormatError(std::string("section '") + names[i] + "' has length " + std::to_string(len) +
                          ", shape implies " + std::to_string(expected[i]));
      if (offsets[i] > payload.size() || len > payload.size() - offsets[i])
        throw FormatError(std::string("truncated container: section '") + names[i] + "' runs past end of file");
      payload_end = std::max(payload_end, offsets[i] + len);
    }
    if (payload_end != payload.size())
      throw FormatError("container has " + std::to_string(payload.size() - payload_end) + " trailing bytes");

    c.weights.words.resize(n_words);
    for (std::size_t i = 0; i < n_words; ++i)
      c.weights.words[i] = static_cast<std::uint32_t>(detail::get_le(payload, offsets[0] + 4 * i, 4));
    c.params.scales.resize(n_params);
    for (std::size_t i = 0; i < n_params; ++i)
      c.params.scales[i] = Half::from_bits(static_cast<std::uint16_t>(detail::get_le(payload, offsets[1] + 2 * i, 2)));
    c.params.zeros.assign(payload.begin() + static_cast<std::ptrdiff_t>(offsets[2]),
                          payload.begin() + static_cast<std::ptrdiff_t>(offsets[2] + n_params));

    if (header.contains("digests")) {
      CodeDigests d;
      d.n_block_crc32 = header["digests"].at("n_block_crc32").get<std::vector<std::uint32_t>>();
      d.k_band_crc32 = header["digests"].at("k_band_crc32").get<std::vector<std::uint32_t>>();
      if (d.n_block_crc32.size() != cols_n / kCodesPerWord ||
          d.k_band_crc32.size() != (rows_k + kDigestBand - 1) / kDigestBand)
        throw FormatError("digest table sizes do not match shape");
      c.digests = std::move(d);
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("corrupt container header: ") + e.what());
  }

  try {
    c.params.validate(c.weights.rows_k, c.weights.cols_n);
    if (c.weights.layout == Layout::quick)
      layout::check_quick_shape(c.weights.rows_k, c.weights.cols_n, c.schedule);
  } catch (const Error &e) {
    throw FormatError(std::string("container contents invalid: ") + e.what());
  }
  return c;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string &path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw FormatError("failed writing '" + path + "'");
}

inline Container read_container(const std::string &path) { return from_bytes(read_file_bytes(path)); }

inline void write_container(const std::string &path, const Container &c) { write_file_bytes(path, to_bytes(c)); }

} // namespace quick::io
