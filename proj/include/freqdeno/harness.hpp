#pragma once

// Desk-scale verification harness: synthetic speckle scenes, a tiny conv net
// hosting the denoiser, plain SGD, finite-difference gradient checking and
// ablation sweeps.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "freqdeno/denoiser.hpp"

namespace freqdeno {

// ---------------------------------------------------------------------------
// Speckle scenes

inline constexpr double kBackground = 0.1;

struct Rect {
  std::size_t y = 0, x = 0, h = 0, w = 0;

  bool overlaps(const Rect& o) const noexcept {
    return y < o.y + o.h && o.y < y + h && x < o.x + o.w && o.x < x + w;
  }
};

struct SpeckleScene {
  Tensor clean;  ///< 1 x H x W
  Tensor noisy;  ///< clean * gamma(L, 1/L) noise
  Tensor mask;   ///< 1 x H x W, 1 inside targets
  std::vector<Rect> targets;
  std::uint64_t seed = 0;
};

/// One unit-mean multiplicative speckle draw with L looks.
inline double speckle_draw(std::mt19937_64& rng, double looks) {
  std::gamma_distribution<double> gamma(looks, 1.0 / looks);
  return gamma(rng);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline SpeckleScene make_scene(std::uint64_t seed, std::size_t height, std::size_t width, double looks) {
  std::mt19937_64 rng(seed);
  SpeckleScene s;
  s.seed = seed;
  s.clean = Tensor({1, height, width}, kBackground);
  s.mask = Tensor({1, height, width});
  const std::size_t max_side = std::max<std::size_t>(3, std::min(height, width) / 4);
  const auto count = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  std::uniform_int_distribution<std::size_t> side(3, max_side);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  constexpr int kMaxTries = 1000;
  for (std::size_t k = 0; k < count; ++k) {
    Rect r;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      r.h = side(rng);
      r.w = side(rng);
      r.y = std::uniform_int_distribution<std::size_t>(0, height - r.h)(rng);
      r.x = std::uniform_int_distribution<std::size_t>(0, width - r.w)(rng);
      placed = std::none_of(s.targets.begin(), s.targets.end(), [&](const Rect& o) { return r.overlaps(o); });
    }
    if (!placed) throw GenerationError("could not place target " + std::to_string(k) + " without overlap");
    const double a = amp(rng);
    for (std::size_t y = r.y; y < r.y + r.h; ++y)
      for (std::size_t x = r.x; x < r.x + r.w; ++x) {
        s.clean[y * width + x] = a;
        s.mask[y * width + x] = 1.0;
      }
    s.targets.push_back(r);
  }
  s.noisy = s.clean;
  for (double& v : s.noisy.data()) v *= speckle_draw(rng, looks);
  return s;
}

/// `count` scenes, deterministic in `seed`.
inline std::vector<SpeckleScene> generate(std::uint64_t seed, std::size_t count, std::size_t height,
                                          std::size_t width, double looks) {
  if (height < 16 || width < 16) throw ConfigError("scenes must be at least 16 x 16");
  if (!(looks >= 1.0)) throw ConfigError("number of looks must be >= 1");
  std::vector<SpeckleScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_scene(mix_seed(seed, i), height, width, looks));
  return out;
}

// ---------------------------------------------------------------------------
// ToyNet

enum class Task { denoise, detect };

/// conv3x3(1->C) -> tanh -> denoiser -> conv3x3(C->1).
class ToyNet {
 public:
  ToyNet(std::size_t channels, DenoModule deno, std::uint64_t seed, Task task = Task::denoise)
      : deno_(std::move(deno)), task_(task), channels_(channels) {
    if (channels == 0) throw ConfigError("ToyNet needs at least one channel");
    std::mt19937_64 rng(mix_seed(seed, 0x70796e6574ull));
    const double in_bound = 1.0 / 3.0;
    const double out_bound = 1.0 / std::sqrt(9.0 * static_cast<double>(channels));
    conv_.add("conv_in.w", uniform({channels, 1, 3, 3}, -in_bound, in_bound, rng));
    conv_.add("conv_in.b", Tensor({channels}));
    conv_.add("conv_out.w", uniform({1, channels, 3, 3}, -out_bound, out_bound, rng));
    conv_.add("conv_out.b", Tensor({1}));
  }

  struct Pass {
    Var prediction;
    double imag_residue = 0.0;
  };

  Pass forward(Var x, const BoundParams& conv, const BoundParams& deno) const {
    Var h = tanh(conv2d(x, conv["conv_in.w"], conv["conv_in.b"]));
    const auto d = deno_.apply(h, deno);
    return {conv2d(d.output, conv["conv_out.w"], conv["conv_out.b"]), d.imag_residue};
  }

  /// Convolutions only, skipping the denoiser slot.
  Var forward_without_denoiser(Var x, const BoundParams& conv) const {
    Var h = tanh(conv2d(x, conv["conv_in.w"], conv["conv_in.b"]));
    return conv2d(h, conv["conv_out.w"], conv["conv_out.b"]);
  }

  Var loss(Var prediction, const SpeckleScene& scene) const {
    Tape& t = detail::tape_of(prediction);
    if (task_ == Task::denoise) {
      Var diff = sub(prediction, t.constant(scene.clean));
      return mean(mul(diff, diff));
    }
    // binary cross-entropy with logits
    return mean(sub(softplus(prediction), mul(t.constant(scene.mask), prediction)));
  }

  Tensor predict(const Tensor& noisy) const {
    Tape t;
    return t.value(forward(t.constant(noisy), conv_.bind(t, false), deno_.params().weights.bind(t, false)).prediction);
  }

  ParamSet& conv_params() noexcept { return conv_; }
  const ParamSet& conv_params() const noexcept { return conv_; }
  DenoModule& denoiser() noexcept { return deno_; }
  const DenoModule& denoiser() const noexcept { return deno_; }
  Task task() const noexcept { return task_; }
  std::size_t channels() const noexcept { return channels_; }

  std::size_t host_parameter_count() const noexcept { return conv_.count(); }
  std::size_t parameter_count() const noexcept { return conv_.count() + deno_.parameter_count(); }

 private:
  ParamSet conv_;
  DenoModule deno_;
  Task task_;
  std::size_t channels_;
};

// ---------------------------------------------------------------------------
// Reports

struct TrialReport {
  std::string config_id;
  std::uint64_t seed = 0;
  std::vector<double> epoch_losses;
  double final_metric = 0.0;
  double runtime_ms = 0.0;
  double max_imag_residue = 0.0;
  double initial_metric = 0.0;

  friend bool operator==(const TrialReport&, const TrialReport&) = default;
};

namespace detail {

inline std::string fmt_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("report: bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// One tab-separated record: config-id, seed, epoch losses (comma list),
/// final metric, runtime-ms, max imaginary residue, initial metric.
inline std::string serialize(const TrialReport& r) {
  std::ostringstream os;
  os << r.config_id << '\t' << r.seed << '\t';
  for (std::size_t i = 0; i < r.epoch_losses.size(); ++i) os << (i ? "," : "") << detail::fmt_exact(r.epoch_losses[i]);
  os << '\t' << detail::fmt_exact(r.final_metric) << '\t' << detail::fmt_exact(r.runtime_ms) << '\t'
     << detail::fmt_exact(r.max_imag_residue) << '\t' << detail::fmt_exact(r.initial_metric);
  return os.str();
}

inline TrialReport parse_report(const std::string& line) {
  const auto f = detail::split(line, '\t');
  if (f.size() != 7) throw FormatError("report: expected 7 fields, got " + std::to_string(f.size()));
  TrialReport r;
  r.config_id = f[0];
  try {
    r.seed = std::stoull(f[1]);
  } catch (const std::logic_error&) {
    throw FormatError("report: bad seed '" + f[1] + "'");
  }
  if (!f[2].empty())
    for (const auto& v : detail::split(f[2], ',')) r.epoch_losses.push_back(detail::parse_double(v));
  r.final_metric = detail::parse_double(f[3]);
  r.runtime_ms = detail::parse_double(f[4]);
  r.max_imag_residue = detail::parse_double(f[5]);
  r.initial_metric = detail::parse_double(f[6]);
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 50;
  double lr = 0.05;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
};

/// 80/20 split after a seed-deterministic shuffle.
inline Split split_scenes(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x73706c6974ull));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = count * 4 / 5;
  return {{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)},
          {idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end()}};
}

/// Held-out metric: mean MSE (denoise) or pixel F1 at probability 0.5 (detect).
inline double evaluate(const ToyNet& net, const std::vector<SpeckleScene>& scenes, const std::vector<std::size_t>& which,
                       double* max_residue = nullptr) {
  if (which.empty()) return 0.0;
  double mse = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i : which) {
    Tape t;
    const auto pass = net.forward(t.constant(scenes[i].noisy), net.conv_params().bind(t, false),
                                  net.denoiser().params().weights.bind(t, false));
    if (max_residue) *max_residue = std::max(*max_residue, pass.imag_residue);
    const Tensor& p = t.value(pass.prediction);
    if (net.task() == Task::denoise) {
      double s = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) s += (p[k] - scenes[i].clean[k]) * (p[k] - scenes[i].clean[k]);
      mse += s / static_cast<double>(p.size());
    } else {
      for (std::size_t k = 0; k < p.size(); ++k) {
        const bool pred = p[k] > 0.0;  // sigmoid(z) > 0.5
        const bool truth = scenes[i].mask[k] > 0.5;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
      }
    }
  }
  if (net.task() == Task::denoise) return mse / static_cast<double>(which.size());
  const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
  return denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom;
}

/// Mini-batch SGD with a fixed learning rate. Each epoch loss is the mean of the
/// per-scene losses seen during that epoch.
inline TrialReport train(ToyNet& net, const std::vector<SpeckleScene>& scenes, const TrainOptions& opt,
                         std::string config_id = "default") {
  const auto start = std::chrono::steady_clock::now();
  if (opt.batch_size == 0) throw ConfigError("batch size must be positive");
  TrialReport report;
  report.config_id = std::move(config_id);
  report.seed = opt.seed;
  const Split split = split_scenes(scenes.size(), opt.seed);
  double residue = 0.0;
  report.initial_metric = evaluate(net, scenes, split.held_out, &residue);

  std::mt19937_64 rng(mix_seed(opt.seed, 0x65706f6368ull));
  std::vector<std::size_t> order = split.train;
  ParamSet& conv = net.conv_params();
  ParamSet& deno = net.denoiser().params().weights;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += opt.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + opt.batch_size);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      std::vector<Tensor> conv_g, deno_g;
      for (const auto& t : conv.tensors()) conv_g.emplace_back(t.shape());
      for (const auto& t : deno.tensors()) deno_g.emplace_back(t.shape());
      for (std::size_t b = b0; b < b1; ++b) {
        const SpeckleScene& scene = scenes[order[b]];
        Tape t;
        const BoundParams cb = conv.bind(t);
        const BoundParams db = deno.bind(t);
        const auto pass = net.forward(t.constant(scene.noisy), cb, db);
        residue = std::max(residue, pass.imag_residue);
        Var loss = net.loss(pass.prediction, scene);
        const double lv = t.value(loss).item();
        if (!std::isfinite(lv))
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " (config " +
                                report.config_id + ", seed " + std::to_string(opt.seed) + ")");
        epoch_loss += lv;
        const Gradients g = t.backward(loss);
        for (std::size_t i = 0; i < conv_g.size(); ++i) {
          const Tensor gi = g[cb.vars()[i]];
          for (std::size_t k = 0; k < gi.size(); ++k) conv_g[i][k] += inv * gi[k];
        }
        for (std::size_t i = 0; i < deno_g.size(); ++i) {
          const Tensor gi = g[db.vars()[i]];
          for (std::size_t k = 0; k < gi.size(); ++k) deno_g[i][k] += inv * gi[k];
        }
      }
      for (std::size_t i = 0; i < conv_g.size(); ++i)
        for (std::size_t k = 0; k < conv_g[i].size(); ++k) conv.tensors()[i][k] -= opt.lr * conv_g[i][k];
      for (std::size_t i = 0; i < deno_g.size(); ++i)
        for (std::size_t k = 0; k < deno_g[i].size(); ++k) deno.tensors()[i][k] -= opt.lr * deno_g[i][k];
    }
    report.epoch_losses.push_back(order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size()));
  }

  report.final_metric = opt.epochs == 0 ? report.initial_metric : evaluate(net, scenes, split.held_out, &residue);
  report.max_imag_residue = residue;
  report.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct GradcheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Builds a scalar loss on a tape from the given leaves.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central differences (f(x + h e) - f(x - h e)) / 2h against tape adjoints, per
/// coordinate; error is |analytic - numeric| / max(1, |numeric|).
inline GradcheckReport gradcheck(const ScalarFn& f, const std::vector<NamedTensor>& leaves, double step,
                                 double tolerance) {
  if (!(step > 0.0)) throw ContractError("gradcheck: step must be positive");
  std::vector<Tensor> point;
  for (const auto& l : leaves) point.push_back(l.value);

  auto evaluate_at = [&](const std::vector<Tensor>& pt) {
    Tape t;
    std::vector<Var> vars;
    for (const auto& v : pt) vars.push_back(t.leaf(v, false));
    return t.value(f(t, vars)).item();
  };

  Tape t;
  std::vector<Var> vars;
  for (const auto& v : point) vars.push_back(t.leaf(v));
  const Var loss = f(t, vars);
  const Gradients g = t.backward(loss);

  GradcheckReport rep;
  for (std::size_t li = 0; li < point.size(); ++li) {
    const Tensor analytic = g[vars[li]];
    for (std::size_t k = 0; k < point[li].size(); ++k) {
      const double orig = point[li][k];
      point[li][k] = orig + step;
      const double fp = evaluate_at(point);
      point[li][k] = orig - step;
      const double fm = evaluate_at(point);
      point[li][k] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      double err = std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(numeric));
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
      if (++rep.coordinates == 1 || err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_leaf = leaves[li].name;
        rep.worst_index = k;
        rep.analytic = analytic[k];
        rep.numeric = numeric;
      }
    }
  }
  rep.passed = rep.max_rel_error < tolerance;
  return rep;
}

/// Single-point convenience overload.
inline GradcheckReport gradcheck(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double step,
                                 double tolerance) {
  return gradcheck([&](Tape& t, const std::vector<Var>& v) { return f(t, v[0]); }, {{"x", point}}, step, tolerance);
}

/// Gradcheck of sum(forward(x) * R) over the input and every parameter of a
/// randomly initialised module (with a random positional bias).
inline GradcheckReport gradcheck_module(const DenoConfig& config, std::size_t channels, std::size_t height,
                                        std::size_t width, std::uint64_t seed, double step = 1e-5,
                                        double tolerance = 1e-5) {
  DenoModule module(config, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x6763ull));
  for (std::size_t i = 0; i < module.params().weights.size(); ++i) {
    const auto& name = module.params().weights.names()[i];
    if (name.ends_with(".e")) module.params().weights.tensors()[i] = uniform({config.stride * config.stride,
                                                                               config.stride * config.stride},
                                                                              -0.1, 0.1, rng);
  }
  const Tensor x = uniform({channels, height, width}, -1.0, 1.0, rng);
  const Tensor r = uniform({channels, height, width}, -1.0, 1.0, rng);

  std::vector<NamedTensor> leaves{{"input", x}};
  const auto& ps = module.params().weights;
  for (std::size_t i = 0; i < ps.size(); ++i) leaves.push_back({ps.names()[i], ps.tensors()[i]});

  auto f = [&](Tape& t, const std::vector<Var>& v) {
    BoundParams bound(ps.names(), std::vector<Var>(v.begin() + 1, v.end()));
    Var out = module.apply(v[0], bound).output;
    return sum(mul(out, t.constant(r)));
  };
  return gradcheck(f, leaves, step, tolerance);
}

/// Configs covered by the module gradcheck matrix:
/// {amp-only, phase-only, both, both+exchange} x {decouple off, on, on+align}.
inline std::vector<std::pair<std::string, DenoConfig>> gradcheck_configs(std::size_t stride) {
  struct Refine {
    const char* name;
    bool amp, phase, exchange;
  };
  const Refine refines[] = {{"amp-only", true, false, false},
                            {"phase-only", false, true, false},
                            {"both", true, true, false},
                            {"both+exchange", true, true, true}};
  struct PhaseMode {
    const char* name;
    bool decouple, align;
  };
  const PhaseMode modes[] = {{"raw-angle", false, false}, {"decouple", true, false}, {"decouple+align", true, true}};
  std::vector<std::pair<std::string, DenoConfig>> out;
  for (const auto& r : refines)
    for (const auto& m : modes) {
      DenoConfig c;
      c.stride = stride;
      c.refine_amplitude = r.amp;
      c.refine_phase = r.phase;
      c.token_exchange = r.exchange;
      c.phase_decouple = m.decouple;
      c.phase_align = m.align;
      out.emplace_back(std::string(r.name) + "/" + m.name, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation sweeps

enum class SweepAxis { stride, refine, exchange, phase };

inline std::string_view axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::stride: return "stride";
    case SweepAxis::refine: return "refine";
    case SweepAxis::exchange: return "exchange";
    case SweepAxis::phase: return "phase";
  }
  return "?";
}

inline SweepAxis parse_axis(std::string_view s) {
  for (SweepAxis a : {SweepAxis::stride, SweepAxis::refine, SweepAxis::exchange, SweepAxis::phase})
    if (axis_name(a) == s) return a;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "' (expected stride|refine|exchange|phase)");
}

struct SweepRow {
  std::string label;
  DenoConfig config;
};

/// Row sets of the four ablation tables, varied around `base`.
inline std::vector<SweepRow> sweep_rows(SweepAxis axis, const DenoConfig& base) {
  std::vector<SweepRow> rows;
  switch (axis) {
    case SweepAxis::stride:
      for (std::size_t s : {1, 2, 4, 8, 16}) {
        DenoConfig c = base;
        c.stride = s;
        rows.push_back({"stride-" + std::to_string(s), c});
      }
      break;
    case SweepAxis::refine: {
      const std::pair<bool, bool> grid[] = {{false, false}, {true, false}, {false, true}, {true, true}};
      for (auto [amp, phase] : grid) {
        DenoConfig c = base;
        c.refine_amplitude = amp;
        c.refine_phase = phase;
        c.token_exchange = false;
        rows.push_back({std::string("amp-") + (amp ? "on" : "off") + "_phase-" + (phase ? "on" : "off"), c});
      }
      break;
    }
    case SweepAxis::exchange: {
      DenoConfig baseline = base;
      baseline.refine_amplitude = baseline.refine_phase = baseline.token_exchange = false;
      DenoConfig no_ex = base;
      no_ex.refine_amplitude = no_ex.refine_phase = true;
      no_ex.token_exchange = false;
      DenoConfig ex = no_ex;
      ex.token_exchange = true;
      rows = {{"baseline", baseline}, {"no-exchange", no_ex}, {"token-exchange", ex}};
      break;
    }
    case SweepAxis::phase: {
      const std::pair<bool, bool> grid[] = {{false, false}, {true, false}, {true, true}};
      for (auto [split, align] : grid) {
        DenoConfig c = base;
        c.phase_decouple = split;
        c.phase_align = align;
        rows.push_back({std::string("split-") + (split ? "on" : "off") + "_align-" + (align ? "on" : "off"), c});
      }
      break;
    }
  }
  for (auto& r : rows) r.config.validate();
  return rows;
}

struct SweepOptions {
  std::size_t channels = 4;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainOptions train;
  Task task = Task::denoise;
  std::size_t threads = 0;  ///< 0: FREQDENO_THREADS or hardware concurrency
};

/// Worker count: explicit request, else FREQDENO_THREADS, else hardware concurrency.
inline std::size_t worker_count(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FREQDENO_THREADS")) {
      try {
        const long cap = std::stol(env);
        if (cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
      } catch (const std::logic_error&) {
      }
    }
  }
  return std::max<std::size_t>(1, n);
}

inline std::string trial_id(SweepAxis axis, const SweepRow& row) {
  return std::string(axis_name(axis)) + ":" + row.label;
}

/// One ToyNet per (row, seed), trained on the same scenes. Reports come back
/// ordered row-major by (row, seed) regardless of scheduling.
inline std::vector<TrialReport> ablation_sweep(const DenoConfig& base, SweepAxis axis,
                                               const std::vector<SpeckleScene>& scenes, const SweepOptions& opt) {
  const auto rows = sweep_rows(axis, base);
  const std::size_t n = rows.size() * opt.seeds.size();
  std::vector<TrialReport> reports(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        const auto& row = rows[i / opt.seeds.size()];
        const std::uint64_t seed = opt.seeds[i % opt.seeds.size()];
        ToyNet net(opt.channels, DenoModule(row.config, mix_seed(seed, 0x64656e6full)), seed, opt.task);
        TrainOptions to = opt.train;
        to.seed = seed;
        reports[i] = train(net, scenes, to, trial_id(axis, row));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(worker_count(opt.threads), n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reports;
}

struct RowSummary {
  std::string config_id;
  std::size_t trials = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double initial_mean = 0.0;
};

inline std::vector<RowSummary> summarize(const std::vector<TrialReport>& reports) {
  std::vector<RowSummary> rows;
  for (const auto& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const RowSummary& s) { return s.config_id == r.config_id; });
    if (it == rows.end()) {
      rows.push_back({r.config_id});
      it = rows.end() - 1;
    }
    ++it->trials;
  }
  for (auto& s : rows) {
    double sum = 0.0, sum_init = 0.0;
    for (const auto& r : reports)
      if (r.config_id == s.config_id) {
        sum += r.final_metric;
        sum_init += r.initial_metric;
      }
    s.mean = sum / static_cast<double>(s.trials);
    s.initial_mean = sum_init / static_cast<double>(s.trials);
    double var = 0.0;
    for (const auto& r : reports)
      if (r.config_id == s.config_id) var += (r.final_metric - s.mean) * (r.final_metric - s.mean);
    s.stddev = s.trials > 1 ? std::sqrt(var / static_cast<double>(s.trials - 1)) : 0.0;
  }
  return rows;
}

/// Aligned plain-text table: one line per row, mean +- sample stddev of the held-out metric.
inline std::string summary_table(const std::vector<TrialReport>& reports, std::string_view metric_name) {
  const auto rows = summarize(reports);
  std::size_t width = std::string_view("config").size();
  for (const auto& r : rows) width = std::max(width, r.config_id.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "config" << "  " << std::right << std::setw(6) << "seeds"
     << "  " << std::setw(28) << (std::string(metric_name) + " (mean +- std)") << "  " << std::setw(14)
     << "epoch-0 mean" << '\n';
  os << std::string(width + 2 + 6 + 2 + 28 + 2 + 14, '-') << '\n';
  for (const auto& r : rows) {
    std::ostringstream cell;
    cell << std::scientific << std::setprecision(4) << r.mean << " +- " << r.stddev;
    std::ostringstream init;
    init << std::scientific << std::setprecision(4) << r.initial_mean;
    os << std::left << std::setw(static_cast<int>(width)) << r.config_id << "  " << std::right << std::setw(6)
       << r.trials << "  " << std::setw(28) << cell.str() << "  " << std::setw(14) << init.str() << '\n';
  }
  return os.str();
}

}  // namespace freqdeno
