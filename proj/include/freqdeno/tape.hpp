#pragma once

// Reverse-mode differentiation tape over Tensor values.
//
// A Tape is an append-only list of nodes. Each node owns its forward value and
// an optional backward closure that pushes the node's adjoint into the adjoints
// of its inputs. Inputs always precede their consumers, so iterating node ids in
// descending order is a reverse topological order.

#include <array>
#include <atomic>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freqdeno/tensor.hpp"

namespace freqdeno {

enum class Primitive : int {
  leaf,
  add,
  sub,
  mul,
  div,
  scale,
  offset,
  clamp_min,
  sqrt,
  cos,
  sin,
  atan2,
  tanh,
  sigmoid,
  softplus,
  matmul,
  softmax,
  sum,
  gather,
  reshape,
  select,
  stack,
  max_leading,
  mean_leading,
  batched_outer,
  batched_matvec,
  dft2,
  conv2d,
  count_
};

inline constexpr std::array<std::string_view, static_cast<std::size_t>(Primitive::count_)> kPrimitiveNames{
    "leaf",   "add",     "sub",    "mul",         "div",          "scale",         "offset",  "clamp_min",
    "sqrt",   "cos",     "sin",    "atan2",       "tanh",         "sigmoid",       "softplus",
    "matmul", "softmax", "sum",    "gather",      "reshape",      "select",        "stack",
    "max_leading", "mean_leading", "batched_outer", "batched_matvec", "dft2", "conv2d"};

inline std::string_view primitive_name(Primitive p) { return kPrimitiveNames[static_cast<std::size_t>(p)]; }

inline std::optional<Primitive> primitive_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kPrimitiveNames.size(); ++i)
    if (kPrimitiveNames[i] == name) return static_cast<Primitive>(i);
  return std::nullopt;
}

namespace fault {

// Test-only hook: when set, the adjoint flowing through every node of the given
// primitive is scaled by 1.5. Used as a negative control for gradient checking.
inline std::atomic<int>& corrupted_slot() {
  static std::atomic<int> slot{-1};
  return slot;
}

inline void corrupt_adjoint(std::optional<Primitive> p) {
  corrupted_slot().store(p ? static_cast<int>(*p) : -1);
}

inline std::optional<Primitive> corrupted_adjoint() {
  int v = corrupted_slot().load();
  if (v < 0) return std::nullopt;
  return static_cast<Primitive>(v);
}

}  // namespace fault

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Adjoints;

using BackwardFn = std::function<void(const Tensor& grad_out, Adjoints& adj)>;

/// Adjoint storage for one backward sweep.
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}

  /// Adjoint of `v`; zeros when nothing flowed into it.
  Tensor operator[](Var v) const;
  bool has(Var v) const { return v.id < grads_.size() && !grads_[v.id].empty(); }

 private:
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), requires_grad, Primitive::leaf, {}});
    return Var{this, nodes_.size() - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Primitive primitive(Var v) const { return nodes_.at(v.id).primitive; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Appends a node whose adjoint is propagated by `backward` when any input requires grad.
  Var record(Primitive p, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), needs, p, needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
  }

  Var record(Primitive p, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs = false;
    for (Var in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), needs, p, needs ? std::move(backward) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
  }

  /// Backward sweep from a scalar loss (seed 1).
  Gradients backward(Var loss) const {
    const Tensor& v = value(loss);
    if (v.size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " + to_string(v.shape()));
    return backward(loss, Tensor(v.shape(), 1.0));
  }

  /// Backward sweep seeded with an explicit upstream adjoint for `output`.
  Gradients backward(Var output, const Tensor& seed) const;

  void check_owner(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    Primitive primitive = Primitive::leaf;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // deque: value references survive later records
  friend class Adjoints;
};

class Adjoints {
 public:
  Adjoints(const Tape& tape, std::vector<Tensor>& grads) : tape_(tape), grads_(grads) {}

  const Tensor& value(Var v) const { return tape_.value(v); }

  /// Mutable adjoint slot for `v`, zero-initialised on first use; null if `v` needs no gradient.
  Tensor* slot(Var v) {
    if (!tape_.nodes_[v.id].requires_grad) return nullptr;
    Tensor& g = grads_[v.id];
    if (g.empty() && tape_.nodes_[v.id].value.size() != 0) g = Tensor(tape_.nodes_[v.id].value.shape());
    return &g;
  }

 private:
  const Tape& tape_;
  std::vector<Tensor>& grads_;
};

inline Gradients Tape::backward(Var output, const Tensor& seed) const {
  check_owner(output);
  if (seed.shape() != value(output).shape())
    throw ShapeError("backward: seed shape " + to_string(seed.shape()) + " does not match output " +
                     to_string(value(output).shape()));
  std::vector<Tensor> grads(nodes_.size());
  grads[output.id] = seed;
  Adjoints adj(*this, grads);
  const auto corrupted = fault::corrupted_adjoint();
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.backward || grads[i].empty()) continue;
    if (corrupted && *corrupted == node.primitive) {
      Tensor scaled = grads[i];
      for (double& g : scaled.data()) g *= 1.5;
      node.backward(scaled, adj);
    } else {
      node.backward(grads[i], adj);
    }
  }
  return Gradients(this, std::move(grads));
}

inline Tensor Gradients::operator[](Var v) const {
  if (has(v)) return grads_[v.id];
  return Tensor(v.tape->value(v).shape());
}

}  // namespace freqdeno
