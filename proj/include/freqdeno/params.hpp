#pragma once

#include <string>
#include <utility>
#include <vector>

#include "freqdeno/tape.hpp"

namespace freqdeno {

class BoundParams;

/// Ordered collection of named parameter tensors.
class ParamSet {
 public:
  void add(std::string name, Tensor value) {
    if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  bool contains(std::string_view name) const { return find(name) != npos; }

  Tensor& at(std::string_view name) { return values_[checked(name)]; }
  const Tensor& at(std::string_view name) const { return values_[checked(name)]; }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& tensors() noexcept { return values_; }
  const std::vector<Tensor>& tensors() const noexcept { return values_; }

  /// Total number of scalar parameters.
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : values_) n += t.size();
    return n;
  }

  /// Registers every tensor as a leaf on `tape`.
  BoundParams bind(Tape& tape, bool requires_grad = true) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return npos;
  }

  std::size_t checked(std::string_view name) const {
    const std::size_t i = find(name);
    if (i == npos) throw ContractError("unknown parameter '" + std::string(name) + "'");
    return i;
  }

  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Parameter set registered on a tape: name -> Var.
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(std::vector<std::string> names, std::vector<Var> vars) : names_(std::move(names)), vars_(std::move(vars)) {}

  Var operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return vars_[i];
    throw ContractError("parameter '" + std::string(name) + "' is not bound");
  }

  bool contains(std::string_view name) const {
    for (const auto& n : names_)
      if (n == name) return true;
    return false;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Var>& vars() const noexcept { return vars_; }

  /// Merges two bindings (names must be disjoint).
  BoundParams merged(const BoundParams& other) const {
    BoundParams out = *this;
    for (std::size_t i = 0; i < other.names_.size(); ++i) {
      if (contains(other.names_[i])) throw ContractError("duplicate bound parameter '" + other.names_[i] + "'");
      out.names_.push_back(other.names_[i]);
      out.vars_.push_back(other.vars_[i]);
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
};

inline BoundParams ParamSet::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(values_.size());
  for (const auto& v : values_) vars.push_back(tape.leaf(v, requires_grad));
  return BoundParams(names_, std::move(vars));
}

}  // namespace freqdeno
