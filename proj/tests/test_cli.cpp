// SPDX-License-Identifier: Apache-2.0
#include "cli_runner.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace {

using namespace quick;
using quick::testing::run_cli;
using quick::testing::scratch_dir;

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    txt = (dir / "w.txt").string();
    nat = (dir / "w.qwk").string();
    qk = (dir / "w.quick.qwk").string();
  }
  void TearDown() override { std::filesystem::remove_all(dir); }

  void make_natural(const std::string &shape = "128x64", const std::string &group = "32") {
    ASSERT_EQ(run_cli({"generate", "--shape", shape, "--seed", "11", "-o", txt}).exit_code, 0);
    const auto r = run_cli({"quantize", txt, "--group-size", group, "-o", nat});
    ASSERT_EQ(r.exit_code, 0) << r.err;
  }
  void make_quick() {
    make_natural();
    ASSERT_EQ(run_cli({"transform", nat, "--to", "quick", "-o", qk}).exit_code, 0);
  }

  std::filesystem::path dir;
  std::string txt, nat, qk;
};

TEST_F(Cli, QuantizeReportsSectionSizes) {
  ASSERT_EQ(run_cli({"generate", "--shape", "128x64", "--seed", "1", "-o", txt}).exit_code, 0);
  const auto r = run_cli({"quantize", txt, "--group-size", "32", "-o", nat});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("words=1024"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("scales=4x64"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("max_abs_error="), std::string::npos);

  const auto c = io::read_container(nat);
  EXPECT_EQ(c.weights.layout, Layout::natural);
  EXPECT_EQ(c.weights.words.size(), 1024u);
  EXPECT_EQ(c.params.scales.size(), 4u * 64u);
  EXPECT_EQ(c.params.zeros.size(), 4u * 64u);
  EXPECT_TRUE(c.digests.has_value());
}

TEST_F(Cli, QuantizeMatchesLibrary) {
  make_natural();
  std::ifstream in(txt);
  std::string line;
  std::getline(in, line); // comment
  std::size_t k, n;
  in >> k >> n;
  std::vector<float> v(k * n);
  for (float &x : v)
    in >> x;
  const auto q = quantize(WeightMatrix(k, n, v), 32);
  const auto c = io::read_container(nat);
  EXPECT_EQ(c.weights.words, pack_natural(q).words);
  EXPECT_EQ(c.params.scales, q.params.scales);
  EXPECT_EQ(c.params.zeros, q.params.zeros);
}

TEST_F(Cli, RawF32InputWithSidecarShape) {
  const auto w = quick::testing::random_weights(32, 16, 5);
  {
    std::ofstream out(dir / "w.f32", std::ios::binary);
    out.write(reinterpret_cast<const char *>(w.values.data()), static_cast<std::streamsize>(w.values.size() * 4));
    std::ofstream side(dir / "w.f32.shape");
    side << "32 16\n";
  }
  const auto r = run_cli({"quantize", (dir / "w.f32").string(), "--format", "f32", "--group-size", "32", "-o", nat});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(io::read_container(nat).weights.words, pack_natural(quantize(w, 32)).words);
}

TEST_F(Cli, QuantizeRejectsBadShapes) {
  ASSERT_EQ(run_cli({"generate", "--shape", "24x8", "-o", txt}).exit_code, 0);
  EXPECT_EQ(run_cli({"quantize", txt, "-o", nat}).exit_code, 2); // K % 16
  ASSERT_EQ(run_cli({"generate", "--shape", "64x8", "-o", txt}).exit_code, 0);
  EXPECT_EQ(run_cli({"quantize", txt, "--group-size", "48", "-o", nat}).exit_code, 2);
  EXPECT_EQ(run_cli({"quantize", (dir / "missing.txt").string(), "-o", nat}).exit_code, 3);
}

TEST_F(Cli, RoundTripIsByteIdentical) {
  make_quick();
  const auto back = (dir / "back.qwk").string();
  ASSERT_EQ(run_cli({"transform", qk, "--to", "natural", "-o", back}).exit_code, 0);
  EXPECT_EQ(io::read_file_bytes(nat), io::read_file_bytes(back));
  EXPECT_NE(io::read_file_bytes(nat), io::read_file_bytes(qk));
  EXPECT_EQ(io::read_container(qk).weights.layout, Layout::quick);
}

TEST_F(Cli, SameLayoutTransformWarns) {
  make_natural();
  const auto out = (dir / "copy.qwk").string();
  const auto r = run_cli({"transform", nat, "--to", "natural", "-o", out});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(io::read_file_bytes(nat), io::read_file_bytes(out));
}

TEST_F(Cli, TruncatedInputIsFormatError) {
  make_quick();
  auto bytes = io::read_file_bytes(qk);
  bytes.resize(bytes.size() - 7);
  const auto cut = (dir / "cut.qwk").string();
  io::write_file_bytes(cut, bytes);
  const auto t = run_cli({"transform", cut, "--to", "natural", "-o", (dir / "x.qwk").string()});
  EXPECT_EQ(t.exit_code, 3);
  EXPECT_FALSE(t.err.empty());
  EXPECT_FALSE(std::filesystem::exists(dir / "x.qwk"));
  EXPECT_EQ(run_cli({"verify", cut, "--problem", "16x64x128"}).exit_code, 3);
}

TEST_F(Cli, VerifyPassesAndIsDeterministic) {
  make_quick();
  const auto a = run_cli({"verify", qk, "--problem", "64x64x128", "--seed", "9"});
  const auto b = run_cli({"verify", qk, "--problem", "64x64x128", "--seed", "9"});
  ASSERT_EQ(a.exit_code, 0) << a.out << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("result=PASS"), std::string::npos);
  EXPECT_NE(a.out.find("integrity=ok"), std::string::npos);

  // Natural and quick forms of the same weights give the same C.
  const auto n = run_cli({"verify", nat, "--problem", "64x64x128", "--seed", "9"});
  const auto crc = [](const std::string &s) { return s.substr(s.find("c_crc32=")); };
  EXPECT_EQ(crc(a.out), crc(n.out));
  const auto other = run_cli({"verify", qk, "--problem", "64x64x128", "--seed", "10"});
  EXPECT_NE(crc(a.out), crc(other.out));
}

TEST_F(Cli, VerifyRejectsBadProblem) {
  make_quick();
  EXPECT_EQ(run_cli({"verify", qk, "--problem", "0x64x128"}).exit_code, 2);
  EXPECT_EQ(run_cli({"verify", qk, "--problem", "20x64x128"}).exit_code, 2);
  EXPECT_EQ(run_cli({"verify", qk, "--problem", "16x64x64"}).exit_code, 2);
  EXPECT_EQ(run_cli({"verify", qk, "--problem", "16x64"}).exit_code, 2);
}

TEST_F(Cli, VerifyLocatesCorruptedWord) {
  make_natural();
  // Natural word index (n/8)*K + k: word 2*128 + 70 covers columns 16..23, row 70.
  auto bytes = io::read_file_bytes(nat);
  bytes.at(quick::testing::word_byte_offset(bytes, 2 * 128 + 70)) ^= 0x10;
  const auto bad = (dir / "bad.qwk").string();
  io::write_file_bytes(bad, bytes);
  const auto r = run_cli({"verify", bad, "--problem", "16x64x128"});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("result=FAIL"), std::string::npos);
  EXPECT_NE(r.out.find("n_block=2 cols=16..23"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("k_band=2 rows=64..95"), std::string::npos) << r.out;
}

TEST_F(Cli, VerifyLocatesCorruptionInQuickContainer) {
  make_quick();
  auto bytes = io::read_file_bytes(qk);
  const std::size_t index = 517;
  bytes.at(quick::testing::word_byte_offset(bytes, index)) ^= 0x01;
  const auto bad = (dir / "bad.qwk").string();
  io::write_file_bytes(bad, bytes);

  // Locate the damaged code through the library's interleave permutation.
  const auto perm = layout::interleave_permutation(128, 64, KernelSchedule{});
  const std::size_t natural_pos = perm.order()[8 * index];
  const std::size_t nb = natural_pos / 8 / 128, k = natural_pos / 8 % 128;

  const auto r = run_cli({"verify", bad, "--problem", "16x64x128"});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("n_block=" + std::to_string(nb) + " "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("k_band=" + std::to_string(k / 32) + " "), std::string::npos) << r.out;
}

TEST_F(Cli, SimulatePaddingRemovesConflicts) {
  make_natural();
  const auto csv = (dir / "sim.csv").string();
  const auto u = run_cli({"simulate", nat, "--problem", "16x64x128", "--layout", "unpadded"});
  const auto p = run_cli({"simulate", nat, "--problem", "16x64x128", "--layout", "padded", "--csv", csv});
  ASSERT_EQ(u.exit_code, 0) << u.err;
  ASSERT_EQ(p.exit_code, 0) << p.err;
  EXPECT_NE(u.out.find("pipeline=baseline problem=16x64x128 writeback_store_conflicts=896"), std::string::npos)
      << u.out;
  EXPECT_NE(p.out.find("pipeline=baseline problem=16x64x128 writeback_store_conflicts=0"), std::string::npos);
  EXPECT_NE(u.out.find("pipeline=quick problem=16x64x128 writeback_store_conflicts=0 ldmatrix_load_conflicts=0"),
            std::string::npos);
  std::ifstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, sim::ConflictReport::csv_header());
  EXPECT_EQ(row.rfind("baseline,16,64,128,", 0), 0u);
  EXPECT_EQ(run_cli({"simulate", nat, "--problem", "16x64x128", "--layout", "skewed"}).exit_code, 2);
}

TEST_F(Cli, CostReportsBothVariants) {
  const auto r = run_cli({"cost", "--problem", "4096x4096x4096", "--tiles", "64x64x64", "--stages", "2",
                          "--quick-tiles", "64x128x64", "--quick-regs", "160"});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("hw=consumer smem_per_sm=102400"), std::string::npos);
  EXPECT_NE(r.out.find("variant=baseline hw=consumer problem=4096x4096x4096 tiles=64x64x64"), std::string::npos);
  EXPECT_NE(r.out.find("smem_bytes_per_block=32768 active_warps=12"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("variant=quick hw=consumer problem=4096x4096x4096 tiles=64x128x64"), std::string::npos);
  EXPECT_NE(r.out.find("smem_bytes_per_block=16384 active_warps=12"), std::string::npos) << r.out;
}

TEST_F(Cli, CostInfeasibleConfigIsDiagnosticNotError) {
  const auto r = run_cli({"cost", "--problem", "64x64x64", "--tiles", "256x256x256", "--stages", "4"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("diagnostic variant=baseline infeasible"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli({"cost", "--problem", "64x64x64", "--hw", "toaster"}).exit_code, 2);
  EXPECT_EQ(run_cli({"cost", "--problem", "64x64x64", "--tiles", "60x64x64"}).exit_code, 2);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).exit_code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(run_cli({"transform", "x.qwk", "--to", "sideways", "-o", "y"}).exit_code, 2);
  EXPECT_EQ(run_cli({"--help"}).exit_code, 0);
}

TEST_F(Cli, PermutationDump) {
  const auto r = run_cli({"permutation", "--shape", "32x8"});
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("dequant_order size=8 order=0,2,4,6,1,3,5,7"), std::string::npos);
  EXPECT_NE(r.out.find("tile lane=0 cells=0,0;16,0;1,0;17,0;8,0;24,0;9,0;25,0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("interleave shape=32x8 tile_n=8 size=256"), std::string::npos);
}

} // namespace
