// SPDX-License-Identifier: Apache-2.0
/**
 * @file   quick_cli.cpp
 * @brief  Command-line front end: quantize and pack weights, convert between
 *         natural and QUICK layouts, verify pipeline equivalence, count bank
 *         conflicts and print tile cost reports.
 *
 * Exit codes: 0 success or warning, 1 verification failure, 2 usage error,
 * 3 I/O or format error.
 */
#include "quick/quick.hpp"

#include <CLI11.hpp>
#include <zlib.h>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace quick;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_dims(const std::string &text, std::size_t count, const char *what) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError(std::string("malformed ") + what + " '" + text + "'");
    dims.push_back(std::stoull(part));
  }
  if (dims.size() != count)
    throw UsageError(std::string(what) + " '" + text + "' needs " + std::to_string(count) + " x-separated values");
  return dims;
}

std::string fmt_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08" PRIx32, v);
  return buf;
}

// Text matrix: optional '#' comment lines, then "K N", then K rows of N numbers.
WeightMatrix read_text_matrix(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open '" + path + "'");
  std::string line, body;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#')
      body += line + '\n';
  std::istringstream ss(body);
  std::size_t k = 0, n = 0;
  if (!(ss >> k >> n))
    throw FormatError("'" + path + "' does not start with a 'K N' shape line");
  std::vector<float> values(k * n);
  for (float &v : values)
    if (!(ss >> v))
      throw FormatError("'" + path + "' holds fewer than K*N values");
  std::string extra;
  if (ss >> extra)
    throw FormatError("'" + path + "' holds more than K*N values");
  return WeightMatrix(k, n, std::move(values));
}

// Raw little-endian float32, row-major; shape from --shape or "<path>.shape".
WeightMatrix read_f32_matrix(const std::string &path, std::string shape) {
  if (shape.empty()) {
    std::ifstream side(path + ".shape");
    std::size_t k = 0, n = 0;
    if (!side || !(side >> k >> n))
      throw UsageError("raw f32 input needs --shape KxN or a '" + path + ".shape' sidecar holding 'K N'");
    shape = std::to_string(k) + "x" + std::to_string(n);
  }
  const auto dims = parse_dims(shape, 2, "shape");
  const auto bytes = io::read_file_bytes(path);
  if (bytes.size() != dims[0] * dims[1] * 4)
    throw FormatError("'" + path + "' has " + std::to_string(bytes.size()) + " bytes, shape needs " +
                      std::to_string(dims[0] * dims[1] * 4));
  std::vector<float> values(dims[0] * dims[1]);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    values[i] = std::bit_cast<float>(u);
  }
  return WeightMatrix(dims[0], dims[1], std::move(values));
}

void write_csv(const std::string &path, const std::string &header, const std::vector<std::string> &rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw FormatError("cannot open '" + path + "' for writing");
  out << header << '\n';
  for (const auto &r : rows)
    out << r << '\n';
}

struct GenerateOpts {
  std::string shape, output, dist = "uniform";
  std::uint64_t seed = 0;
  double value = 0.0;
};

int cmd_generate(const GenerateOpts &o) {
  const auto dims = parse_dims(o.shape, 2, "shape");
  SplitMix64 rng(o.seed);
  std::ostringstream os;
  os << "# seed=" << o.seed << " dist=" << o.dist << '\n' << dims[0] << ' ' << dims[1] << '\n';
  for (std::size_t k = 0; k < dims[0]; ++k) {
    for (std::size_t n = 0; n < dims[1]; ++n) {
      const float v = o.dist == "constant" ? static_cast<float>(o.value) : static_cast<float>(rng.uniform(-1.0, 1.0));
      os << (n ? " " : "") << fmt_float(v);
    }
    os << '\n';
  }
  const std::string text = os.str();
  io::write_file_bytes(o.output, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
  std::cout << "generate shape=" << dims[0] << 'x' << dims[1] << " seed=" << o.seed << " dist=" << o.dist
            << " output=" << o.output << '\n';
  return kExitOk;
}

struct QuantizeOpts {
  std::string input, output, format = "text", shape;
  std::size_t group_size = kDefaultGroupSize;
};

int cmd_quantize(const QuantizeOpts &o) {
  const WeightMatrix w = o.format == "f32" ? read_f32_matrix(o.input, o.shape) : read_text_matrix(o.input);
  const QuantizedMatrix q = quantize(w, o.group_size);
  const WeightMatrix d = dequantize_reference(q);
  double max_err = 0.0, sum_err = 0.0;
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    const double e = std::fabs(static_cast<double>(w.values[i]) - d.values[i]);
    max_err = std::max(max_err, e);
    sum_err += e;
  }
  const io::Container c{pack_natural(q), q.params, KernelSchedule{}, io::compute_digests(q.codes, q.rows_k, q.cols_n)};
  io::write_container(o.output, c);
  std::cout << "quantize shape=" << q.rows_k << 'x' << q.cols_n << " group_size=" << o.group_size
            << " layout=natural words=" << c.weights.words.size() << " scales=" << q.params.groups() << 'x'
            << q.cols_n << " max_abs_error=" << fmt_float(max_err)
            << " mean_abs_error=" << fmt_float(sum_err / static_cast<double>(w.values.size())) << '\n';
  return kExitOk;
}

struct TransformOpts {
  std::string input, output, to;
  std::size_t tile_n = kMmaN;
};

int cmd_transform(const TransformOpts &o) {
  const auto bytes = io::read_file_bytes(o.input);
  io::Container c = io::from_bytes(bytes);
  const Layout target = parse_layout(o.to);
  if (target == c.weights.layout) {
    std::cerr << "warning: '" << o.input << "' is already in the " << to_string(target)
              << " layout; writing it unchanged\n";
    if (o.output != o.input)
      io::write_file_bytes(o.output, bytes);
    std::cout << "transform layout=" << to_string(target) << " changed=false words=" << c.weights.words.size() << '\n';
    return kExitOk;
  }
  if (target == Layout::quick) {
    c.schedule.tile_n = o.tile_n;
    c.weights = layout::interleave_quick(c.weights, c.schedule);
  } else {
    c.weights = layout::deinterleave_quick(c.weights, c.schedule);
    c.schedule = KernelSchedule{};
  }
  io::write_container(o.output, c);
  std::cout << "transform layout=" << to_string(target) << " changed=true words=" << c.weights.words.size()
            << " tile_n=" << c.schedule.tile_n << '\n';
  return kExitOk;
}

struct ProblemForms {
  io::Container container;
  PackedWeights natural;
  PackedWeights quick;
  sim::ActivationMatrix activations;
  sim::ProblemShape shape;
};

ProblemForms load_problem(const std::string &path, const std::string &problem, std::uint64_t seed) {
  const auto dims = parse_dims(problem, 3, "problem");
  ProblemForms f;
  f.shape = {dims[0], dims[1], dims[2]};
  if (f.shape.m == 0 || f.shape.m % kMmaM != 0)
    throw UsageError("problem M must be a positive multiple of 16, got " + std::to_string(f.shape.m));
  f.container = io::read_container(path);
  const PackedWeights &w = f.container.weights;
  if (w.cols_n != f.shape.n || w.rows_k != f.shape.k)
    throw UsageError("problem " + f.shape.to_text() + " does not match container weights K=" +
                     std::to_string(w.rows_k) + " N=" + std::to_string(w.cols_n));
  layout::check_quick_shape(w.rows_k, w.cols_n, f.container.schedule);
  if (w.layout == Layout::quick) {
    f.quick = w;
    f.natural = layout::deinterleave_quick(w, f.container.schedule);
  } else {
    f.natural = w;
    f.quick = layout::interleave_quick(w, f.container.schedule);
  }
  f.activations = sim::random_activations(f.shape.m, f.shape.k, seed);
  return f;
}

struct VerifyOpts {
  std::string input, problem;
  std::uint64_t seed = 0;
};

int cmd_verify(const VerifyOpts &o) {
  const ProblemForms f = load_problem(o.input, o.problem, o.seed);
  const KernelSchedule &sched = f.container.schedule;
  std::cout << "verify problem=" << f.shape.to_text() << " seed=" << o.seed
            << " layout=" << to_string(f.container.weights.layout) << " tile_n=" << sched.tile_n << '\n';

  const auto codes = unpack_natural(f.natural);
  if (f.container.digests) {
    if (const auto hit = io::locate_damage(*f.container.digests, io::compute_digests(codes, f.shape.k, f.shape.n))) {
      const std::size_t k0 = hit->k_band * io::kDigestBand;
      std::cout << "integrity=mismatch n_block=" << hit->n_block << " cols=" << hit->n_block * kMmaN << ".."
                << hit->n_block * kMmaN + kMmaN - 1 << " k_band=" << hit->k_band << " rows=" << k0 << ".."
                << std::min(k0 + io::kDigestBand, f.shape.k) - 1 << " output_cols=" << hit->n_block * kMmaN << ".."
                << hit->n_block * kMmaN + kMmaN - 1 << '\n'
                << "result=FAIL\n";
      return kExitVerifyFailed;
    }
    std::cout << "integrity=ok\n";
  } else {
    std::cout << "integrity=skipped reason=no_digests\n";
  }

  QuantizedMatrix q{f.shape.k, f.shape.n, codes, f.container.params};
  const WeightMatrix dequantized = dequantize_reference(q);
  std::size_t tiles = 0;
  for (std::size_t nb = 0; nb < f.shape.n / kMmaN; ++nb)
    for (std::size_t kp = 0; kp < f.shape.k / sched.k_rows_per_load(); ++kp) {
      sim::BankTrace trace;
      const auto direct = sim::quick_b_fragments(f.quick, q.params, sched, nb, kp);
      const auto loaded = sim::ldmatrix_b_fragments(dequantized, nb, kp, trace);
      for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t lane = 0; lane < kWarpSize; ++lane)
          for (std::size_t s = 0; s < 4; ++s)
            if (direct[t].get(lane, s) != loaded[t].get(lane, s)) {
              std::cout << "fragments=mismatch n_block=" << nb << " k_tile=" << 2 * kp + t << " lane=" << lane
                        << " slot=" << s << '\n'
                        << "result=FAIL\n";
              return kExitVerifyFailed;
            }
      ++tiles;
    }
  std::cout << "fragments=ok tiles=" << tiles << '\n';

  const auto base = sim::run_baseline_pipeline(f.activations, f.natural, q.params, sched);
  const auto quick = sim::run_quick_pipeline(f.activations, f.quick, q.params, sched);
  const auto ref = sim::reference_gemm(f.activations, dequantized);
  for (const auto &[name, other] : {std::pair{"quick", &quick.c}, std::pair{"reference", &ref}})
    if (const auto mm = sim::first_mismatch(base.c, *other)) {
      std::cout << "pipelines=mismatch against=" << name << " m=" << mm->m << " n=" << mm->n
                << " baseline=" << fmt_float(mm->expected) << ' ' << name << '=' << fmt_float(mm->actual) << '\n'
                << "result=FAIL\n";
      return kExitVerifyFailed;
    }
  const auto crc = static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef *>(base.c.values.data()),
                                                    static_cast<uInt>(base.c.values.size() * sizeof(float))));
  std::cout << "pipelines=ok c_crc32=" << hex32(crc) << '\n' << "result=PASS\n";
  return kExitOk;
}

struct SimulateOpts {
  std::string input, problem, layout = "unpadded", csv;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateOpts &o) {
  const sim::BaselineSmemLayout smem = [&] {
    try {
      return sim::BaselineSmemLayout::preset(o.layout);
    } catch (const std::invalid_argument &e) {
      throw UsageError(e.what());
    }
  }();
  const ProblemForms f = load_problem(o.input, o.problem, o.seed);
  const KernelSchedule &sched = f.container.schedule;
  const auto &params = f.container.params;
  const auto base = sim::run_baseline_pipeline(f.activations, f.natural, params, sched, smem);
  const auto quick = sim::run_quick_pipeline(f.activations, f.quick, params, sched);
  const bool match = !sim::first_mismatch(base.c, quick.c).has_value();

  std::cout << "simulate problem=" << f.shape.to_text() << " seed=" << o.seed << " smem_layout=" << smem.name
            << " row_stride_bytes=" << smem.row_stride_bytes << '\n'
            << base.report.to_text() << '\n'
            << quick.report.to_text() << '\n'
            << "c_match=" << (match ? "true" : "false") << '\n';
  if (!o.csv.empty())
    write_csv(o.csv, sim::ConflictReport::csv_header(), {base.report.to_csv(), quick.report.to_csv()});
  return match ? kExitOk : kExitVerifyFailed;
}

struct CostOpts {
  std::string problem, tiles = "64x64x64", quick_tiles, hw = "consumer", variant = "both", csv;
  std::size_t warps = 4, stages = 1, regs = 128, quick_regs = 0, group_size = kDefaultGroupSize;
};

int cmd_cost(const CostOpts &o) {
  const auto p = parse_dims(o.problem, 3, "problem");
  const cost::GemmProblem problem{p[0], p[1], p[2]};
  if (problem.m == 0 || problem.n == 0 || problem.k == 0)
    throw UsageError("problem dimensions must be positive");
  const cost::HardwareProfile hw = [&] {
    try {
      return cost::hardware_preset(o.hw);
    } catch (const std::invalid_argument &e) {
      throw UsageError(e.what());
    }
  }();
  auto make_cfg = [&](const std::string &tiles, std::size_t regs, cost::Variant v) {
    const auto t = parse_dims(tiles, 3, "tiles");
    return cost::TileConfig{t[0], t[1], t[2], o.warps, o.stages, regs, v};
  };

  std::vector<cost::CostReport> reports;
  if (o.variant == "baseline" || o.variant == "both")
    reports.push_back(cost::evaluate(problem, make_cfg(o.tiles, o.regs, cost::Variant::baseline), hw, o.group_size));
  if (o.variant == "quick" || o.variant == "both")
    reports.push_back(cost::evaluate(problem,
                                     make_cfg(o.quick_tiles.empty() ? o.tiles : o.quick_tiles,
                                              o.quick_regs ? o.quick_regs : o.regs, cost::Variant::quick),
                                     hw, o.group_size));
  if (reports.empty())
    throw UsageError("--variant must be baseline, quick or both");

  std::cout << "cost hw=" << hw.name << " smem_per_sm=" << hw.smem_per_sm << " regs_per_sm=" << hw.regs_per_sm
            << " max_warps_per_sm=" << hw.max_warps_per_sm << " problem=" << problem.m << 'x' << problem.n << 'x'
            << problem.k << " group_size=" << o.group_size << '\n';
  std::printf("%-9s %-12s %10s %7s %-8s %14s %14s %14s %14s\n", "variant", "tiles", "smem_B", "warps", "limiter",
              "dram_act", "dram_weights", "dram_params", "dram_total");
  for (const auto &r : reports)
    std::printf("%-9s %-12s %10zu %7zu %-8s %14" PRIu64 " %14" PRIu64 " %14" PRIu64 " %14" PRIu64 "\n",
                std::string(to_string(r.config.variant)).c_str(), r.config.tiles_text().c_str(), r.smem_bytes_per_block,
                r.occupancy.active_warps, r.occupancy.limiter.c_str(), r.dram.activations, r.dram.weights,
                r.dram.quant_params, r.dram.total);
  std::fflush(stdout);
  for (const auto &r : reports) {
    if (!r.occupancy.feasible())
      std::cout << "diagnostic variant=" << to_string(r.config.variant) << ' ' << r.occupancy.diagnostic << '\n';
    std::cout << r.to_text() << '\n';
  }
  if (!o.csv.empty()) {
    std::vector<std::string> rows;
    for (const auto &r : reports)
      rows.push_back(r.to_csv());
    write_csv(o.csv, cost::CostReport::csv_header(), rows);
  }
  return kExitOk;
}

struct PermutationOpts {
  std::string shape;
  std::size_t tile_n = kMmaN;
};

int cmd_permutation(const PermutationOpts &o) {
  std::cout << "dequant_order " << layout::dequant_order_permutation().to_text() << '\n';
  const auto &table = layout::nibble_source_table();
  for (std::size_t lane = 0; lane < kWarpSize; ++lane) {
    std::cout << "tile lane=" << lane << " cells=";
    for (std::size_t i = 0; i < 8; ++i)
      std::cout << (i ? ";" : "") << table[lane][i].row << ',' << table[lane][i].col;
    std::cout << '\n';
  }
  if (!o.shape.empty()) {
    const auto dims = parse_dims(o.shape, 2, "shape");
    KernelSchedule sched;
    sched.tile_n = o.tile_n;
    std::cout << "interleave shape=" << dims[0] << 'x' << dims[1] << " tile_n=" << o.tile_n << ' '
              << layout::interleave_permutation(dims[0], dims[1], sched).to_text() << '\n';
  }
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Offline QUICK weight interleaving, warp-level verification and cost analysis"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto *g = app.add_subcommand("generate", "Write a seeded random text weight matrix");
  g->add_option("--shape", gen.shape, "KxN")->required();
  g->add_option("-o,--output", gen.output, "Output text matrix")->required();
  g->add_option("--seed", gen.seed, "SplitMix64 seed");
  g->add_option("--dist", gen.dist, "uniform or constant")->check(CLI::IsMember({"uniform", "constant"}));
  g->add_option("--value", gen.value, "Value for --dist constant");

  QuantizeOpts qo;
  auto *qc = app.add_subcommand("quantize", "Quantize a dense matrix into a natural-layout QWK1 container");
  qc->add_option("input", qo.input, "Text matrix, or raw f32 with --format f32")->required();
  qc->add_option("-o,--output", qo.output, "Output container")->required();
  qc->add_option("--group-size", qo.group_size, "K-rows per quantization group");
  qc->add_option("--format", qo.format, "text or f32")->check(CLI::IsMember({"text", "f32"}));
  qc->add_option("--shape", qo.shape, "KxN for raw f32 input (else read <input>.shape)");

  TransformOpts to;
  auto *tc = app.add_subcommand("transform", "Interleave to or deinterleave from the QUICK layout");
  tc->add_option("input", to.input, "Input container")->required();
  tc->add_option("--to", to.to, "quick or natural")->required()->check(CLI::IsMember({"quick", "natural"}));
  tc->add_option("-o,--output", to.output, "Output container")->required();
  tc->add_option("--tile-n", to.tile_n, "Warp tile N used for the quick stream");

  VerifyOpts vo;
  auto *vc = app.add_subcommand("verify", "Check fragment and pipeline equivalence on seeded activations");
  vc->add_option("input", vo.input, "Container")->required();
  vc->add_option("--problem", vo.problem, "MxNxK")->required();
  vc->add_option("--seed", vo.seed, "SplitMix64 seed for activations");

  SimulateOpts so;
  auto *sc = app.add_subcommand("simulate", "Count shared-memory bank conflicts for both pipelines");
  sc->add_option("input", so.input, "Container")->required();
  sc->add_option("--problem", so.problem, "MxNxK")->required();
  sc->add_option("--layout", so.layout, "Baseline write-back layout preset: unpadded or padded");
  sc->add_option("--seed", so.seed, "SplitMix64 seed for activations");
  sc->add_option("--csv", so.csv, "Also write CSV here");

  CostOpts co;
  auto *cc = app.add_subcommand("cost", "Shared memory, occupancy and DRAM traffic per tile config");
  cc->add_option("--problem", co.problem, "MxNxK")->required();
  cc->add_option("--tiles", co.tiles, "Block tile MxNxK");
  cc->add_option("--quick-tiles", co.quick_tiles, "Block tile for the quick variant (default --tiles)");
  cc->add_option("--warps", co.warps, "Warps per block");
  cc->add_option("--stages", co.stages, "Pipeline stages");
  cc->add_option("--regs", co.regs, "Registers per thread estimate");
  cc->add_option("--quick-regs", co.quick_regs, "Registers per thread for quick (default --regs)");
  cc->add_option("--hw", co.hw, "consumer, workstation or datacenter");
  cc->add_option("--variant", co.variant, "baseline, quick or both");
  cc->add_option("--group-size", co.group_size, "Quantization group size");
  cc->add_option("--csv", co.csv, "Also write CSV here");

  PermutationOpts po;
  auto *pc = app.add_subcommand("permutation", "Print the dequant order and interleave tables");
  pc->add_option("--shape", po.shape, "KxN: also print the whole-matrix nibble permutation");
  pc->add_option("--tile-n", po.tile_n, "Warp tile N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g)
      return cmd_generate(gen);
    if (*qc)
      return cmd_quantize(qo);
    if (*tc)
      return cmd_transform(to);
    if (*vc)
      return cmd_verify(vo);
    if (*sc)
      return cmd_simulate(so);
    if (*cc)
      return cmd_cost(co);
    if (*pc)
      return cmd_permutation(po);
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LayoutError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
