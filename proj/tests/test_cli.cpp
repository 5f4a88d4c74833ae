#include <gtest/gtest.h>

#include <random>

#include "freqdeno/cli.hpp"
#include "run_cli.hpp"

using namespace freqdeno;
namespace fs = std::filesystem;
using clirun::run;

namespace {

fs::path write_input(const fs::path& dir, Shape shape, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  const fs::path p = dir / "input.fdt";
  save_tensor(uniform(std::move(shape), -1.0, 1.0, rng), p);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, VersionAndUsage) {
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.output.find(FREQDENO_VERSION), std::string::npos);
  EXPECT_EQ(run("").code, cli::kConfigError);
  EXPECT_EQ(run("denoise --no-such-flag x").code, cli::kConfigError);
  EXPECT_EQ(run("sweep --axis depth").code, cli::kConfigError);
}

TEST(Cli, NonDividingStrideIsAConfigError) {
  const auto dir = clirun::fresh_dir("cli_stride");
  const auto in = write_input(dir, {2, 64, 64});
  const auto r = run("denoise " + q(in) + " --stride 7 --out " + q(dir / "out"));
  EXPECT_EQ(r.code, cli::kConfigError) << r.output;
  EXPECT_NE(r.output.find("stride 7"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("H=64"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out" / "output.fdt"));
}

TEST(Cli, InconsistentTogglesAreConfigErrors) {
  const auto dir = clirun::fresh_dir("cli_toggles");
  const auto in = write_input(dir, {1, 8, 8});
  EXPECT_EQ(run("denoise " + q(in) + " --stride 4 --no-refine-phase --token-exchange --out " + q(dir)).code,
            cli::kConfigError);
  EXPECT_EQ(run("denoise " + q(in) + " --stride 4 --no-phase-decouple --phase-align --out " + q(dir)).code,
            cli::kConfigError);
  // without explicit flags the dependent toggles follow
  EXPECT_EQ(run("denoise " + q(in) + " --stride 4 --no-refine-phase --no-phase-decouple --out " + q(dir)).code,
            cli::kOk);
}

TEST(Cli, MissingOrCorruptInputIsAnIoError) {
  const auto dir = clirun::fresh_dir("cli_io");
  EXPECT_EQ(run("denoise " + q(dir / "absent.fdt") + " --out " + q(dir)).code, cli::kIoError);
  {
    std::ofstream f(dir / "junk.fdt", std::ios::binary);
    f << "not a tensor file";
  }
  EXPECT_EQ(run("denoise " + q(dir / "junk.fdt") + " --out " + q(dir)).code, cli::kIoError);
  EXPECT_EQ(run("denoise " + q(write_input(dir, {1, 8, 8})) + " --stride 4 --params-dir " + q(dir / "nope") +
                " --out " + q(dir))
                .code,
            cli::kIoError);
}

TEST(Cli, DenoiseWritesOutputAndManifestWithoutTouchingInput) {
  const auto dir = clirun::fresh_dir("cli_denoise");
  const auto in = write_input(dir, {2, 16, 16});
  const std::string before = clirun::read_file(in);
  const auto r = run("denoise " + q(in) + " --stride 4 --seed 3 --out " + q(dir / "out"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("imag_residue"), std::string::npos);
  EXPECT_EQ(clirun::read_file(in), before);
  const Tensor y = load_tensor(dir / "out" / "output.fdt");
  EXPECT_EQ(y.shape(), (Shape{2, 16, 16}));
  const std::string manifest = clirun::read_file(dir / "out" / "manifest.txt");
  EXPECT_NE(manifest.find("stride = 4"), std::string::npos);
  EXPECT_NE(manifest.find("seed = 3"), std::string::npos);

  // the library computes the same thing
  DenoConfig c;
  c.stride = 4;
  EXPECT_EQ(DenoModule(c, 3).forward(load_tensor(in)), y);
}

TEST(Cli, IdentityGatesRoundTripThroughDiff) {
  const auto dir = clirun::fresh_dir("cli_identity");
  const auto in = write_input(dir, {3, 8, 8});
  ASSERT_EQ(run("denoise " + q(in) + " --stride 4 --identity-gates --no-phase-align --out " + q(dir)).code, 0);
  EXPECT_EQ(run("diff " + q(in) + " " + q(dir / "output.fdt") + " --tolerance 1e-9").code, cli::kOk);
  EXPECT_EQ(run("diff " + q(in) + " " + q(dir / "output.fdt") + " --tolerance 0").code, cli::kVerificationFailed);
}

TEST(Cli, ParamsDirIsHonoured) {
  const auto dir = clirun::fresh_dir("cli_params");
  const auto in = write_input(dir, {1, 8, 8});
  DenoConfig c;
  c.stride = 2;
  DenoModule m(c, 99);
  m.params().weights.at("amp.mlp.b2") = Tensor({1}, -2.0);
  cli::save_params(m.params().weights, dir / "params");
  ASSERT_EQ(run("denoise " + q(in) + " --stride 2 --params-dir " + q(dir / "params") + " --out " + q(dir)).code, 0);
  EXPECT_EQ(load_tensor(dir / "output.fdt"), m.forward(load_tensor(in)));
  save_tensor(Tensor({3}), dir / "params" / "amp.wq.fdt");
  EXPECT_EQ(run("denoise " + q(in) + " --stride 2 --params-dir " + q(dir / "params") + " --out " + q(dir)).code,
            cli::kConfigError);
}

TEST(Cli, ExportMapsWritesBothGates) {
  const auto dir = clirun::fresh_dir("cli_maps");
  const auto in = write_input(dir, {2, 8, 8});
  ASSERT_EQ(run("export-maps " + q(in) + " --stride 4 --out " + q(dir)).code, 0);
  for (const char* f : {"amp_gate.fdt", "phase_gate.fdt", "amp_gate.pgm", "phase_gate.pgm", "amp_gate.pgm.range"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const Tensor g = load_tensor(dir / "amp_gate.fdt");
  EXPECT_EQ(g.shape(), (Shape{8, 8}));
  EXPECT_LT(max_abs_diff(import_gray(dir / "amp_gate.pgm"), g), (max_abs(g) + 1.0) / 255.0);
}

TEST(Cli, GradcheckPassesAndCatchesCorruptAdjoint) {
  const auto ok = run("gradcheck --stride 2 --size 4 --channels 1");
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("gradcheck passed"), std::string::npos);

  const auto bad = run("gradcheck --stride 2 --size 4 --channels 1 --corrupt-adjoint batched_matvec");
  EXPECT_EQ(bad.code, cli::kVerificationFailed);
  EXPECT_NE(bad.output.find("FAIL op:batched_matvec"), std::string::npos) << bad.output;

  EXPECT_EQ(run("gradcheck --corrupt-adjoint nothing").code, cli::kConfigError);
}

TEST(Cli, SelftestPassesAndDetectsTamperedGolden) {
  const auto r = run("selftest");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("selftest passed"), std::string::npos);

  const auto dir = clirun::fresh_dir("cli_golden");
  for (const auto& e : fs::directory_iterator(FREQDENO_GOLDEN_DIR)) fs::copy(e.path(), dir / e.path().filename());
  {
    std::fstream f(dir / "golden_tensor.fdt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(30);
    f.put('\x7f');
  }
  const auto t = run("selftest --golden-dir " + q(dir));
  EXPECT_EQ(t.code, cli::kVerificationFailed);
  EXPECT_NE(t.output.find("conformance"), std::string::npos) << t.output;
}

TEST(Cli, ExperimentWritesParseableReports) {
  const auto dir = clirun::fresh_dir("cli_experiment");
  const auto r = run("experiment --stride 4 --size 16 --scenes 10 --epochs 2 --seeds 2 --channels 2 --batch 4 --out " +
                     q(dir));
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream lines(clirun::read_file(dir / "reports.txt"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto rep = parse_report(line);
    EXPECT_EQ(rep.epoch_losses.size(), 2u);
    EXPECT_TRUE(std::isfinite(rep.final_metric));
    ++n;
  }
  EXPECT_EQ(n, 2);
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
  EXPECT_TRUE(fs::exists(dir / "params-seed1" / "amp.wq.fdt"));
  EXPECT_TRUE(fs::exists(dir / "params-seed1" / "conv_in.w.fdt"));
  EXPECT_EQ(run("experiment --size 8 --out " + q(dir)).code, cli::kConfigError);
}

TEST(Cli, SweepWritesOneReportFilePerRow) {
  const auto dir = clirun::fresh_dir("cli_sweep");
  const auto r = run("sweep --axis phase --stride 4 --size 16 --scenes 10 --epochs 1 --seeds 1 --channels 2 --batch 4 "
                     "--out " + q(dir),
                     "FREQDENO_THREADS=2");
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* label : {"split-off_align-off", "split-on_align-off", "split-on_align-on"})
    EXPECT_TRUE(fs::exists(dir / ("phase_" + std::string(label) + ".reports"))) << label;
  EXPECT_NE(clirun::read_file(dir / "summary.txt").find("phase:split-on_align-on"), std::string::npos);
}
