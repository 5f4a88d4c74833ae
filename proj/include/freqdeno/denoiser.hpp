#pragma once

// Transform-domain feature denoiser.
//
// forward: DFT -> amplitude/phase -> central shift -> channel pooling ->
// BPSA or PATE gates -> gated amplitude and (decoupled) phase -> optional
// harmonisation -> inverse shift -> recombine -> inverse DFT (real part).

#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "freqdeno/attention.hpp"
#include "freqdeno/spectral.hpp"

namespace freqdeno {

inline constexpr std::size_t kDefaultStride = 8;
/// Imaginary residue above this is reported as a symmetry failure.
inline constexpr double kResidueTolerance = 1e-6;

struct DenoConfig {
  std::size_t stride = kDefaultStride;
  bool refine_amplitude = true;
  bool refine_phase = true;
  bool token_exchange = true;
  bool phase_decouple = true;
  bool phase_align = true;
  SqrtScaling sqrt_scaling = SqrtScaling::group_count;

  void validate() const {
    if (stride == 0) throw ConfigError("stride must be positive");
    if (token_exchange && !(refine_amplitude && refine_phase))
      throw ConfigError("token exchange requires both amplitude and phase refinement");
    if (phase_align && !phase_decouple) throw ConfigError("phase alignment requires phase decoupling");
  }

  bool is_identity() const noexcept { return !refine_amplitude && !refine_phase; }

  std::string describe() const {
    std::ostringstream os;
    os << "stride=" << stride << " refine_amp=" << refine_amplitude << " refine_phase=" << refine_phase
       << " token_exchange=" << token_exchange << " phase_decouple=" << phase_decouple
       << " phase_align=" << phase_align
       << " sqrt_scaling=" << (sqrt_scaling == SqrtScaling::group_count ? "group" : "token");
    return os.str();
  }

  friend bool operator==(const DenoConfig&, const DenoConfig&) = default;
};

/// Adjoints returned by DenoModule::backward.
struct Backprop {
  Tensor input_grad;
  ParamSet param_grads;
};

class DenoModule;

/// A forward pass recorded on its own tape, ready for backward().
class ForwardTrace {
 public:
  ForwardTrace() = default;

  bool recorded() const noexcept { return tape_ != nullptr; }
  const Tensor& output() const { return require().value(output_); }
  double imag_residue() const noexcept { return residue_; }

 private:
  friend class DenoModule;
  const Tape& require() const {
    if (!tape_) throw ContractError("no forward pass has been recorded");
    return *tape_;
  }

  std::unique_ptr<Tape> tape_;
  Var input_{};
  Var output_{};
  BoundParams bound_;
  double residue_ = 0.0;
};

class DenoModule {
 public:
  struct Outputs {
    Var output;
    std::optional<Var> amp_gate;    ///< H x W, shifted layout
    std::optional<Var> phase_gate;  ///< H x W, shifted layout
    double imag_residue = 0.0;

    bool residue_ok() const noexcept { return imag_residue < kResidueTolerance; }
  };

  explicit DenoModule(DenoConfig config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    std::vector<Modality> mods;
    if (config_.refine_amplitude) mods.push_back(Modality::amplitude);
    if (config_.refine_phase) mods.push_back(Modality::phase);
    params_ = AttentionParams::init(config_.stride * config_.stride, std::move(mods), seed);
  }

  DenoModule(DenoConfig config, AttentionParams params) : config_(config), params_(std::move(params)) {
    config_.validate();
    const DenoModule shape_ref(config_);
    if (params_.tokens != shape_ref.params_.tokens || params_.modalities != shape_ref.params_.modalities)
      throw ConfigError("attention parameters do not match the configuration");
    for (std::size_t i = 0; i < shape_ref.params_.weights.size(); ++i) {
      const auto& name = shape_ref.params_.weights.names()[i];
      if (params_.weights.at(name).shape() != shape_ref.params_.weights.tensors()[i].shape())
        throw ConfigError("parameter '" + name + "' has the wrong shape");
    }
  }

  /// Identity-test mode: every gate is exactly 1.
  static DenoModule identity_gates(DenoConfig config) {
    DenoModule m(config);
    m.params_.saturate_gates();
    return m;
  }

  const DenoConfig& config() const noexcept { return config_; }
  const AttentionParams& params() const noexcept { return params_; }
  AttentionParams& params() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.weights.count(); }

  /// Records the pipeline on the input's tape. `bound` must come from params().weights.bind().
  Outputs apply(Var input, const BoundParams& bound) const {
    Tape& t = detail::tape_of(input);
    const Tensor& x = t.value(input);
    detail::check_planes(x, "denoiser input");
    const auto spec = PartitionSpec::square(x.dim(1), x.dim(2), config_.stride);
    if (config_.is_identity()) return {input, std::nullopt, std::nullopt, 0.0};

    PolarSpectrum polar = central_shift(to_polar(dft2_forward(input)));

    std::optional<Var> cos_p, sin_p;
    if (config_.refine_phase && config_.phase_decouple) std::tie(cos_p, sin_p) = decouple_phase(polar.phase);

    std::optional<AttentionWeights> amp_w, phase_w;
    if (config_.refine_amplitude) amp_w = AttentionWeights::from(bound, Modality::amplitude);
    if (config_.refine_phase) phase_w = AttentionWeights::from(bound, Modality::phase);

    std::optional<Var> amp_map, phase_map;
    if (config_.refine_amplitude) amp_map = channel_pool(polar.amplitude);
    if (config_.refine_phase) {
      phase_map = config_.phase_decouple
                      ? channel_pool(stack({channel_pool(*cos_p), channel_pool(*sin_p)}))
                      : channel_pool(polar.phase);
    }

    Outputs out;
    if (config_.token_exchange) {
      auto [ga, gp] = pate(*amp_map, *phase_map, spec, *amp_w, *phase_w, config_.sqrt_scaling, true);
      out.amp_gate = ga.values;
      out.phase_gate = gp.values;
    } else {
      if (amp_map) out.amp_gate = bpsa(*amp_map, spec, *amp_w, Modality::amplitude, config_.sqrt_scaling).values;
      if (phase_map) out.phase_gate = bpsa(*phase_map, spec, *phase_w, Modality::phase, config_.sqrt_scaling).values;
    }

    if (out.amp_gate) polar.amplitude = mul(polar.amplitude, *out.amp_gate);
    if (out.phase_gate) {
      if (config_.phase_decouple) {
        Var c = mul(*cos_p, *out.phase_gate);
        Var s = mul(*sin_p, *out.phase_gate);
        if (config_.phase_align) std::tie(c, s) = harmonize_phase(c, s);
        polar.cos_plane = c;
        polar.sin_plane = s;
      } else {
        polar.phase = mul(polar.phase, *out.phase_gate);
      }
    }

    InverseResult inv = dft2_inverse(from_polar(inverse_shift(polar)));
    out.output = inv.image;
    out.imag_residue = inv.imag_residue;
    return out;
  }

  /// Inference-only forward pass.
  Tensor forward(const Tensor& input) const {
    Tape t;
    const Outputs o = apply(t.constant(input), params_.weights.bind(t, false));
    return t.value(o.output);
  }

  ForwardTrace record(const Tensor& input) const {
    ForwardTrace tr;
    tr.tape_ = std::make_unique<Tape>();
    tr.input_ = tr.tape_->leaf(input);
    tr.bound_ = params_.weights.bind(*tr.tape_);
    const Outputs o = apply(tr.input_, tr.bound_);
    tr.output_ = o.output;
    tr.residue_ = o.imag_residue;
    return tr;
  }

  /// Adjoints of the recorded forward for an upstream gradient on its output.
  Backprop backward(const ForwardTrace& trace, const Tensor& upstream) const {
    const Tape& t = trace.require();
    const Gradients g = t.backward(trace.output_, upstream);
    Backprop bp{g[trace.input_], {}};
    for (std::size_t i = 0; i < trace.bound_.names().size(); ++i)
      bp.param_grads.add(trace.bound_.names()[i], g[trace.bound_.vars()[i]]);
    return bp;
  }

  /// Gates (S_A, S_P) in shifted layout; a disabled branch reports the constant-1 map.
  std::pair<Tensor, Tensor> export_modulation(const Tensor& input) const {
    Tape t;
    const Outputs o = apply(t.constant(input), params_.weights.bind(t, false));
    const Shape plane{input.dim(1), input.dim(2)};
    Tensor a = o.amp_gate ? t.value(*o.amp_gate) : Tensor(plane, 1.0);
    Tensor p = o.phase_gate ? t.value(*o.phase_gate) : Tensor(plane, 1.0);
    return {std::move(a), std::move(p)};
  }

 private:
  DenoConfig config_;
  AttentionParams params_;
};

}  // namespace freqdeno
