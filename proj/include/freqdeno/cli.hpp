#pragma once

// Command implementations behind the `freqdeno` executable.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration error, 3 I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "freqdeno/checks.hpp"
#include "freqdeno/freqdeno.hpp"

namespace freqdeno::cli {

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kConfigError = 2, kIoError = 3 };

struct CliConfig {
  std::string command;
  DenoConfig deno;
  std::uint64_t seed = 0;
  std::filesystem::path input;
  std::filesystem::path out = ".";
  std::filesystem::path params_dir;
  bool identity_gates = false;

  // experiment / sweep
  std::size_t epochs = 50;
  double lr = 0.05;
  std::size_t scenes = 64;
  std::size_t size = 32;
  double looks = 4.0;
  std::size_t channels = 4;
  std::size_t batch = 8;
  std::size_t seeds = 3;
  Task task = Task::denoise;
  std::string axis = "stride";

  // gradcheck
  std::size_t check_channels = 2;
  std::size_t check_size = 8;
  double tolerance = 1e-5;
  std::string corrupt_adjoint;

  std::filesystem::path golden_dir;
};

inline std::string task_name(Task t) { return t == Task::denoise ? "denoise" : "detect"; }

/// Writes manifest.txt: the fully resolved configuration of a run.
inline void write_manifest(const CliConfig& c) {
  std::filesystem::create_directories(c.out);
  std::ostringstream m;
  m << "freqdeno_version = " << FREQDENO_VERSION << '\n'
    << "command = " << c.command << '\n'
    << "input = " << c.input.string() << '\n'
    << "params_dir = " << c.params_dir.string() << '\n'
    << "identity_gates = " << c.identity_gates << '\n'
    << "seed = " << c.seed << '\n'
    << "stride = " << c.deno.stride << '\n'
    << "refine_amp = " << c.deno.refine_amplitude << '\n'
    << "refine_phase = " << c.deno.refine_phase << '\n'
    << "token_exchange = " << c.deno.token_exchange << '\n'
    << "phase_decouple = " << c.deno.phase_decouple << '\n'
    << "phase_align = " << c.deno.phase_align << '\n'
    << "sqrt_scaling = " << (c.deno.sqrt_scaling == SqrtScaling::group_count ? "group" : "token") << '\n'
    << "epochs = " << c.epochs << '\n'
    << "lr = " << detail::fmt_exact(c.lr) << '\n'
    << "batch = " << c.batch << '\n'
    << "scenes = " << c.scenes << '\n'
    << "size = " << c.size << '\n'
    << "looks = " << detail::fmt_exact(c.looks) << '\n'
    << "channels = " << c.channels << '\n'
    << "seeds = " << c.seeds << '\n'
    << "task = " << task_name(c.task) << '\n'
    << "axis = " << c.axis << '\n';
  std::ofstream f(c.out / "manifest.txt");
  f << m.str();
  if (!f) throw IoError("cannot write manifest in '" + c.out.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

inline void save_params(const ParamSet& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < p.size(); ++i) save_tensor(p.tensors()[i], dir / (p.names()[i] + ".fdt"));
}

/// Builds the module from --params-dir, --identity-gates, or a seeded init.
inline DenoModule build_module(const CliConfig& c) {
  if (c.identity_gates) return DenoModule::identity_gates(c.deno);
  DenoModule m(c.deno, c.seed);
  if (!c.params_dir.empty()) {
    auto& w = m.params().weights;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto path = c.params_dir / (w.names()[i] + ".fdt");
      Tensor t = load_tensor(path);
      if (t.shape() != w.tensors()[i].shape())
        throw ConfigError("parameter file '" + path.string() + "' has shape " + to_string(t.shape()) +
                          ", expected " + to_string(w.tensors()[i].shape()));
      w.tensors()[i] = std::move(t);
    }
  }
  return m;
}

inline void check_input(const Tensor& x, std::size_t stride) {
  if (x.rank() != 3) throw ConfigError("input must be a C x H x W tensor, got " + to_string(x.shape()));
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (stride == 0 || h % stride != 0 || w % stride != 0)
    throw ConfigError("stride " + std::to_string(stride) + " does not divide the input extents H=" +
                      std::to_string(h) + ", W=" + std::to_string(w));
}

inline int cmd_denoise(const CliConfig& c, std::ostream& out) {
  c.deno.validate();
  const Tensor x = load_tensor(c.input);
  check_input(x, c.deno.stride);
  const DenoModule m = build_module(c);
  Tape t;
  const auto o = m.apply(t.constant(x), m.params().weights.bind(t, false));
  write_manifest(c);
  save_tensor(t.value(o.output), c.out / "output.fdt");
  out << "imag_residue " << detail::fmt_exact(o.imag_residue) << (o.residue_ok() ? "" : " (above 1e-6)") << '\n';
  out << "wrote " << (c.out / "output.fdt").string() << '\n';
  return kOk;
}

inline int cmd_diff(const std::filesystem::path& a, const std::filesystem::path& b, double tolerance,
                    std::ostream& out) {
  const Tensor x = load_tensor(a);
  const Tensor y = load_tensor(b);
  if (x.shape() != y.shape()) {
    out << "shape mismatch " << to_string(x.shape()) << " vs " << to_string(y.shape()) << '\n';
    return kVerificationFailed;
  }
  const double d = max_abs_diff(x, y);
  out << "max_abs_diff " << detail::fmt_exact(d) << '\n';
  return d <= tolerance ? kOk : kVerificationFailed;
}

inline int cmd_gradcheck(const CliConfig& c, std::ostream& out) {
  if (!c.corrupt_adjoint.empty()) {
    const auto p = primitive_from_name(c.corrupt_adjoint);
    if (!p) throw ConfigError("unknown primitive '" + c.corrupt_adjoint + "'");
    fault::corrupt_adjoint(*p);
  }
  struct Reset {
    ~Reset() { fault::corrupt_adjoint(std::nullopt); }
  } reset;

  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  auto line = [&](const std::string& name, const GradcheckReport& r, double tol) {
    out << (r.passed ? "pass " : "FAIL ") << name << "  max_rel_err=" << std::scientific << std::setprecision(3)
        << r.max_rel_error << "  tol=" << tol << "  worst=" << r.worst_leaf << "[" << r.worst_index << "]"
        << std::defaultfloat << '\n';
    ok = ok && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  };

  out << "# primitives (tol " << kPrimitiveTolerance << ")\n";
  for (const auto& pc : primitive_checks(c.seed + 7))
    line("op:" + pc.name, gradcheck(pc.fn, pc.leaves, 1e-5, kPrimitiveTolerance), kPrimitiveTolerance);

  out << "# module C=" << c.check_channels << " H=W=" << c.check_size << " stride=" << c.deno.stride << '\n';
  for (const auto& [name, cfg0] : gradcheck_configs(c.deno.stride)) {
    DenoConfig cfg = cfg0;
    cfg.sqrt_scaling = c.deno.sqrt_scaling;
    line("module:" + name, gradcheck_module(cfg, c.check_channels, c.check_size, c.check_size, c.seed, 1e-5, c.tolerance),
         c.tolerance);
  }
  out << "worst " << worst_name << " " << std::scientific << worst << std::defaultfloat << '\n';
  out << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return ok ? kOk : kVerificationFailed;
}

inline std::vector<std::uint64_t> seed_list(const CliConfig& c) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < c.seeds; ++i) s.push_back(c.seed + i);
  return s;
}

inline int cmd_experiment(const CliConfig& c, std::ostream& out) {
  c.deno.validate();
  PartitionSpec::square(c.size, c.size, c.deno.stride);
  const auto scenes = generate(c.seed, c.scenes, c.size, c.size, c.looks);
  write_manifest(c);
  std::vector<TrialReport> reports;
  std::ostringstream stream;
  for (std::uint64_t s : seed_list(c)) {
    ToyNet net(c.channels, DenoModule(c.deno, mix_seed(s, 0x64656e6full)), s, c.task);
    TrainOptions o{c.epochs, c.lr, s, c.batch};
    reports.push_back(train(net, scenes, o, "experiment"));
    stream << serialize(reports.back()) << '\n';
    save_params(net.denoiser().params().weights, c.out / ("params-seed" + std::to_string(s)));
    save_params(net.conv_params(), c.out / ("params-seed" + std::to_string(s)));
    out << "seed " << s << ": held-out " << task_name(c.task) << " metric " << reports.back().initial_metric
        << " -> " << reports.back().final_metric << '\n';
  }
  write_text(c.out / "reports.txt", stream.str());
  const std::string table = summary_table(reports, c.task == Task::denoise ? "held-out MSE" : "pixel F1");
  write_text(c.out / "summary.txt", table);
  out << table;
  return kOk;
}

inline int cmd_sweep(const CliConfig& c, std::ostream& out) {
  const SweepAxis axis = parse_axis(c.axis);
  const auto rows = sweep_rows(axis, c.deno);
  for (const auto& r : rows) PartitionSpec::square(c.size, c.size, r.config.stride);
  const auto scenes = generate(c.seed, c.scenes, c.size, c.size, c.looks);
  write_manifest(c);
  SweepOptions opt;
  opt.channels = c.channels;
  opt.seeds = seed_list(c);
  opt.train = TrainOptions{c.epochs, c.lr, 0, c.batch};
  opt.task = c.task;
  const auto reports = ablation_sweep(c.deno, axis, scenes, opt);
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    std::ostringstream s;
    for (std::size_t k = 0; k < opt.seeds.size(); ++k) s << serialize(reports[ri * opt.seeds.size() + k]) << '\n';
    write_text(c.out / (std::string(axis_name(axis)) + "_" + rows[ri].label + ".reports"), s.str());
  }
  const std::string table = summary_table(reports, c.task == Task::denoise ? "held-out MSE" : "pixel F1");
  write_text(c.out / "summary.txt", table);
  out << table;
  for (const auto& r : reports)
    if (!std::isfinite(r.final_metric)) {
      out << "non-finite metric in " << r.config_id << '\n';
      return kVerificationFailed;
    }
  return kOk;
}

inline int cmd_export_maps(const CliConfig& c, std::ostream& out) {
  c.deno.validate();
  const Tensor x = load_tensor(c.input);
  check_input(x, c.deno.stride);
  const DenoModule m = build_module(c);
  const auto [amp, phase] = m.export_modulation(x);
  write_manifest(c);
  save_tensor(amp, c.out / "amp_gate.fdt");
  save_tensor(phase, c.out / "phase_gate.fdt");
  export_gray(amp, c.out / "amp_gate.pgm");
  export_gray(phase, c.out / "phase_gate.pgm");
  out << "wrote amp_gate/phase_gate (.fdt, .pgm) to " << c.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// selftest

/// Contents of the committed golden TensorFile (golden_tensor.fdt).
inline Tensor golden_tensor() { return Tensor({2, 3}, {0.0, 1.0, -2.5, 3.25, 1e-3, 6.02214076e23}); }

/// Source map of the committed golden graymap (golden_gray.pgm): -1 + 2*i/15 row-major.
inline Tensor golden_gray_source() {
  Tensor t({4, 4});
  for (std::size_t i = 0; i < 16; ++i) t[i] = -1.0 + 2.0 * static_cast<double>(i) / 15.0;
  return t;
}

inline int cmd_selftest(const CliConfig& c, std::ostream& out) {
  std::mt19937_64 rng(c.seed + 1234);
  auto fail = [&](const std::string& what) {
    out << "FAIL " << what << '\n';
    return kVerificationFailed;
  };

  // DFT round trip, Hermitian symmetry, Parseval.
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t ch = 1 + trial % 3, h = std::size_t{4} << (trial % 3), w = std::size_t{4} << ((trial / 3) % 3);
    const Tensor x = uniform({ch, h, w}, -1.0, 1.0, rng);
    Tape t;
    Var xv = t.constant(x);
    const Spectrum s = dft2_forward(xv);
    const auto inv = dft2_inverse(s);
    if (max_abs_diff(t.value(inv.image), x) >= 1e-10) return fail("dft round trip");
    const Tensor& re = t.value(s.real);
    const Tensor& im = t.value(s.imag);
    double e_spatial = 0.0, e_freq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      e_spatial += x[i] * x[i];
      e_freq += re[i] * re[i] + im[i] * im[i];
    }
    if (std::abs(e_spatial - e_freq / static_cast<double>(h * w)) >= 1e-9) return fail("parseval");
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          const std::size_t a = (k * h + u) * w + v, b = (k * h + (h - u) % h) * w + (w - v) % w;
          if (std::abs(re[a] - re[b]) >= 1e-10 || std::abs(im[a] + im[b]) >= 1e-10) return fail("hermitian symmetry");
        }
  }
  out << "ok dft round trip / parseval / hermitian\n";

  // Central shift is a permutation with an exact inverse.
  {
    const Tensor x = uniform({2, 8, 6}, -1.0, 1.0, rng);
    Tape t;
    Var s = central_shift(t.constant(x));
    if (!(t.value(inverse_shift(s)) == x)) return fail("central shift inverse");
    if (!(t.value(central_shift(s)) == x)) return fail("central shift involution (even sizes)");
    auto a = x.values(), b = t.value(s).values();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return fail("central shift multiset");
  }
  out << "ok central shift\n";

  // fold(unfold(x)) == x for every divisor spec.
  for (std::size_t n : {4, 8, 16}) {
    const Tensor x = uniform({n, n}, -1.0, 1.0, rng);
    for (std::size_t h = 1; h <= n; ++h)
      for (std::size_t w = 1; w <= n; ++w) {
        if (n % h || n % w) continue;
        Tape t;
        const auto spec = PartitionSpec::make(n, n, h, w);
        if (!(t.value(fold(unfold(t.constant(x), spec))) == x)) return fail("fold/unfold losslessness");
      }
  }
  out << "ok band partition losslessness\n";

  // Identity configurations.
  {
    DenoConfig off;
    off.stride = 4;
    off.refine_amplitude = off.refine_phase = off.token_exchange = false;
    DenoConfig gates;
    gates.stride = 4;
    gates.phase_align = false;
    const DenoModule m_off(off, 1);
    const DenoModule m_gate = DenoModule::identity_gates(gates);
    for (int i = 0; i < 5; ++i) {
      const Tensor x = uniform({2, 8, 8}, -1.0, 1.0, rng);
      if (max_abs_diff(m_off.forward(x), x) >= 1e-9) return fail("identity config (refines off)");
      if (max_abs_diff(m_gate.forward(x), x) >= 1e-9) return fail("identity config (unit gates)");
    }
  }
  out << "ok identity configurations\n";

  // No-exchange PATE equals two BPSA passes.
  {
    const auto params = AttentionParams::init(16, {Modality::amplitude, Modality::phase}, 3);
    const Tensor a = uniform({8, 8}, 0.0, 2.0, rng), p = uniform({8, 8}, -3.0, 3.0, rng);
    const auto spec = PartitionSpec::square(8, 8, 4);
    Tape t;
    const auto bound = params.weights.bind(t, false);
    const auto wa = AttentionWeights::from(bound, Modality::amplitude);
    const auto wp = AttentionWeights::from(bound, Modality::phase);
    Var av = t.constant(a), pv = t.constant(p);
    const auto [ga, gp] = pate(av, pv, spec, wa, wp, SqrtScaling::group_count, false);
    if (!(t.value(ga.values) == t.value(bpsa(av, spec, wa, Modality::amplitude).values)) ||
        !(t.value(gp.values) == t.value(bpsa(pv, spec, wp, Modality::phase).values)))
      return fail("pate without exchange");
  }
  out << "ok pate no-exchange reduction\n";

  // Golden-file conformance.
  const auto dir = c.golden_dir;
  try {
    const auto tensor_path = dir / "golden_tensor.fdt";
    const auto bytes = detail::read_all(tensor_path);
    if (!(decode_tensor(bytes, tensor_path.string()) == golden_tensor()))
      return fail("golden conformance: tensor values differ");
    if (bytes != encode_tensor(golden_tensor())) return fail("golden conformance: tensor bytes differ");
    const auto gray_path = dir / "golden_gray.pgm";
    const GrayImage img = load_pgm(gray_path);
    GrayRange range;
    if (img.pixels != quantize_gray(golden_gray_source(), range)) return fail("golden conformance: gray pixels differ");
    const GrayRange stored = load_range(gray_path);
    if (stored.min != range.min || stored.max != range.max) return fail("golden conformance: gray range differs");
  } catch (const Error& e) {
    return fail(std::string("golden conformance: ") + e.what());
  }
  out << "ok golden-file conformance\n";
  out << "selftest passed\n";
  return kOk;
}

/// Maps library exceptions onto the exit-code contract.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const FormatError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const CorruptionError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const TruncationError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kVerificationFailed;
  }
}

}  // namespace freqdeno::cli
