#pragma once

// Band-wise partition self-attention (BPSA) and phase-amplitude token exchange (PATE).
//
// Each band group is a vector of h*w scalar tokens. Queries, keys and values
// mix tokens linearly through (h*w) x (h*w) matrices shared by all groups:
//   q = x Wq, k = x Wk, v = x Wv            (x is a 1 x n row)
//   out = softmax(q^T k * scale + E) v^T    (n x n logits per group)
// The attended tokens are folded back to H x W and passed through a pointwise
// gate MLP (1 -> 4 -> 1, tanh then sigmoid), giving a modulation map in (0, 1).

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "freqdeno/bands.hpp"
#include "freqdeno/params.hpp"

namespace freqdeno {

enum class SqrtScaling { group_count, token_count };
enum class Modality { amplitude, phase };

inline std::string_view modality_prefix(Modality m) { return m == Modality::amplitude ? "amp" : "phase"; }

struct ModulationMap {
  Var values;  ///< H x W, centrally shifted layout
  Modality modality;
};

inline constexpr std::size_t kGateHidden = 4;
/// sigmoid(log 19) = 0.95: the gate starts close to pass-through.
inline const double kInitialGateLogit = std::log(19.0);
/// Large enough that sigmoid rounds to exactly 1.0 in double precision.
inline constexpr double kSaturatedGateLogit = 40.0;

/// Learnable weights for one or two modalities; names are "<amp|phase>.<wq|wk|wv|e|mlp.*>".
struct AttentionParams {
  std::size_t tokens = 1;
  std::vector<Modality> modalities;
  ParamSet weights;

  static AttentionParams init(std::size_t tokens, std::vector<Modality> modalities, std::uint64_t seed) {
    AttentionParams p{tokens, std::move(modalities), {}};
    std::mt19937_64 rng(seed);
    const std::size_t n = tokens;
    for (Modality m : p.modalities) {
      const std::string pre = std::string(modality_prefix(m)) + ".";
      p.weights.add(pre + "wq", uniform({n, n}, -0.02, 0.02, rng));
      p.weights.add(pre + "wk", uniform({n, n}, -0.02, 0.02, rng));
      Tensor wv = uniform({n, n}, -0.01, 0.01, rng);
      for (std::size_t i = 0; i < n; ++i) wv[i * n + i] += 1.0;
      p.weights.add(pre + "wv", std::move(wv));
      p.weights.add(pre + "e", Tensor({n, n}));
      p.weights.add(pre + "mlp.w1", uniform({1, kGateHidden}, -0.1, 0.1, rng));
      p.weights.add(pre + "mlp.b1", uniform({kGateHidden}, -0.1, 0.1, rng));
      p.weights.add(pre + "mlp.w2", uniform({kGateHidden, 1}, -0.1, 0.1, rng));
      p.weights.add(pre + "mlp.b2", Tensor({1}, kInitialGateLogit));
    }
    return p;
  }

  /// Zeroes the final gate layer and saturates its bias so every gate is exactly 1.
  void saturate_gates() {
    for (Modality m : modalities) {
      const std::string pre = std::string(modality_prefix(m)) + ".";
      weights.at(pre + "mlp.w2") = Tensor({kGateHidden, 1});
      weights.at(pre + "mlp.b2") = Tensor({1}, kSaturatedGateLogit);
    }
  }

  bool has(Modality m) const {
    for (Modality x : modalities)
      if (x == m) return true;
    return false;
  }
};

/// Attention weights of one modality bound on a tape.
struct AttentionWeights {
  Var wq, wk, wv, e, w1, b1, w2, b2;

  static AttentionWeights from(const BoundParams& bound, Modality m) {
    const std::string pre = std::string(modality_prefix(m)) + ".";
    return {bound[pre + "wq"],     bound[pre + "wk"],     bound[pre + "wv"],     bound[pre + "e"],
            bound[pre + "mlp.w1"], bound[pre + "mlp.b1"], bound[pre + "mlp.w2"], bound[pre + "mlp.b2"]};
  }
};

/// Max-pool plus average-pool across channels: C x H x W -> H x W.
inline Var channel_pool(Var x) {
  const Tensor& v = detail::tape_of(x).value(x);
  if (v.rank() != 3 || v.dim(0) == 0) throw ShapeError("channel_pool: expected C x H x W, got " + to_string(v.shape()));
  return add(max_leading(x), mean_leading(x));
}

inline double logit_scale(const PartitionSpec& spec, SqrtScaling scaling) {
  const double d = static_cast<double>(scaling == SqrtScaling::group_count ? spec.groups() : spec.tokens());
  return 1.0 / std::sqrt(d);
}

/// Batched attention over d groups of n tokens. Queries come from `query_tokens`,
/// keys/values from `kv_tokens` (both d x n).
inline Var attend(Var query_tokens, Var kv_tokens, Var wq, Var wk, Var wv, Var e, double scale_factor) {
  Var q = matmul(query_tokens, wq);
  Var k = matmul(kv_tokens, wk);
  Var v = matmul(kv_tokens, wv);
  Var logits = add(scale(batched_outer(q, k), scale_factor), e);
  return batched_matvec(softmax(logits), v);
}

/// Self-attention inside one group of h*w tokens.
inline Var bpsa_group(Var group, const AttentionWeights& w, const PartitionSpec& spec,
                      SqrtScaling scaling = SqrtScaling::group_count) {
  const Tensor& v = detail::tape_of(group).value(group);
  if (v.size() != spec.tokens())
    throw ShapeError("bpsa_group: " + std::to_string(v.size()) + " tokens, partition expects " +
                     std::to_string(spec.tokens()));
  Var row = reshape(group, {1, spec.tokens()});
  Var out = attend(row, row, w.wq, w.wk, w.wv, w.e, logit_scale(spec, scaling));
  return reshape(out, v.shape());
}

/// Pointwise gate: sigmoid(w2 . tanh(w1 x + b1) + b2) at every location of an H x W map.
inline Var gate_mlp(Var map, const AttentionWeights& w) {
  const Shape shape = detail::tape_of(map).value(map).shape();
  Var col = reshape(map, {element_count(shape), 1});
  Var hidden = tanh(add(matmul(col, w.w1), w.b1));
  Var logit = add(matmul(hidden, w.w2), w.b2);
  return reshape(sigmoid(logit), shape);
}

/// Attended tokens before the gate MLP, folded back to H x W.
inline Var bpsa_tokens(Var map, const PartitionSpec& spec, const AttentionWeights& w,
                       SqrtScaling scaling = SqrtScaling::group_count) {
  BandGrouping g = unfold(map, spec);
  g.tokens = attend(g.tokens, g.tokens, w.wq, w.wk, w.wv, w.e, logit_scale(g.spec, scaling));
  return fold(g);
}

inline ModulationMap bpsa(Var map, const PartitionSpec& spec, const AttentionWeights& w, Modality modality,
                          SqrtScaling scaling = SqrtScaling::group_count) {
  return {gate_mlp(bpsa_tokens(map, spec, w, scaling), w), modality};
}

/// Pre-MLP outputs of the exchanged branches: amplitude queries attend to phase
/// keys/values and vice versa, group by group.
inline std::pair<Var, Var> pate_tokens(Var amp_map, Var phase_map, const PartitionSpec& spec,
                                       const AttentionWeights& amp, const AttentionWeights& phase,
                                       SqrtScaling scaling = SqrtScaling::group_count) {
  const Tape& t = detail::tape_of(amp_map, phase_map);
  if (t.value(amp_map).shape() != t.value(phase_map).shape())
    throw ShapeError("pate: amplitude map " + to_string(t.value(amp_map).shape()) + " vs phase map " +
                     to_string(t.value(phase_map).shape()));
  BandGrouping ga = unfold(amp_map, spec);
  BandGrouping gp = unfold(phase_map, spec);
  const double s = logit_scale(ga.spec, scaling);
  Var amp_out = attend(ga.tokens, gp.tokens, amp.wq, phase.wk, phase.wv, amp.e, s);
  Var phase_out = attend(gp.tokens, ga.tokens, phase.wq, amp.wk, amp.wv, phase.e, s);
  BandGrouping fa{amp_out, ga.spec, true};
  BandGrouping fp{phase_out, gp.spec, true};
  return {fold(fa), fold(fp)};
}

/// Amplitude and phase modulation maps. With `exchange` off this is exactly two
/// independent bpsa passes.
inline std::pair<ModulationMap, ModulationMap> pate(Var amp_map, Var phase_map, const PartitionSpec& spec,
                                                    const AttentionWeights& amp, const AttentionWeights& phase,
                                                    SqrtScaling scaling = SqrtScaling::group_count,
                                                    bool exchange = true) {
  if (!exchange) {
    const Tape& t = detail::tape_of(amp_map, phase_map);
    if (t.value(amp_map).shape() != t.value(phase_map).shape()) throw ShapeError("pate: map shape mismatch");
    return {bpsa(amp_map, spec, amp, Modality::amplitude, scaling),
            bpsa(phase_map, spec, phase, Modality::phase, scaling)};
  }
  auto [a, p] = pate_tokens(amp_map, phase_map, spec, amp, phase, scaling);
  return {{gate_mlp(a, amp), Modality::amplitude}, {gate_mlp(p, phase), Modality::phase}};
}

}  // namespace freqdeno
