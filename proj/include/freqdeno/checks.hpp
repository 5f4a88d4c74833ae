#pragma once

// Gradient-check cases for every differentiable primitive: each builds
// sum(op(inputs) * R) for a fixed random R.

#include <random>
#include <string>
#include <vector>

#include "freqdeno/harness.hpp"

namespace freqdeno {

struct PrimitiveCheck {
  std::string name;
  ScalarFn fn;
  std::vector<NamedTensor> leaves;
};

inline constexpr double kPrimitiveTolerance = 1e-6;

inline std::vector<PrimitiveCheck> primitive_checks(std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  auto u = [&](Shape s, double lo = -1.0, double hi = 1.0) { return uniform(std::move(s), lo, hi, rng); };
  std::vector<PrimitiveCheck> checks;

  // Weighted sum of an op's output so every output element matters.
  auto add_check = [&](std::string name, std::vector<NamedTensor> leaves, std::function<Var(const std::vector<Var>&)> op,
                       Shape out_shape) {
    Tensor r = u(out_shape);
    checks.push_back({std::move(name),
                      [op, r](Tape& t, const std::vector<Var>& v) { return sum(mul(op(v), t.constant(r))); },
                      std::move(leaves)});
  };

  add_check("add", {{"a", u({2, 3, 3})}, {"b", u({3, 3})}}, [](auto& v) { return add(v[0], v[1]); }, {2, 3, 3});
  add_check("sub", {{"a", u({3, 3})}, {"b", u({2, 3, 3})}}, [](auto& v) { return sub(v[0], v[1]); }, {2, 3, 3});
  add_check("mul", {{"a", u({2, 3, 3})}, {"b", u({1, 3, 3})}}, [](auto& v) { return mul(v[0], v[1]); }, {2, 3, 3});
  add_check("div", {{"a", u({2, 4})}, {"b", u({2, 4}, 0.5, 2.0)}}, [](auto& v) { return div(v[0], v[1]); }, {2, 4});
  add_check("scale", {{"a", u({5})}}, [](auto& v) { return scale(v[0], -1.7); }, {5});
  add_check("offset", {{"a", u({5})}}, [](auto& v) { return offset(v[0], 0.3); }, {5});
  add_check("clamp_min", {{"a", Tensor({6}, {-0.9, -0.31, 0.05, 0.29, 0.4, 1.3})}},
            [](auto& v) { return clamp_min(v[0], 0.1); }, {6});
  add_check("sqrt", {{"a", u({6}, 0.2, 3.0)}}, [](auto& v) { return sqrt(v[0]); }, {6});
  add_check("cos", {{"a", u({6}, -4.0, 4.0)}}, [](auto& v) { return cos(v[0]); }, {6});
  add_check("sin", {{"a", u({6}, -4.0, 4.0)}}, [](auto& v) { return sin(v[0]); }, {6});
  // Keep away from the negative real axis where atan2 jumps.
  add_check("atan2", {{"y", u({8}, -1.0, 1.0)}, {"x", u({8}, 0.2, 1.5)}}, [](auto& v) { return atan2(v[0], v[1]); },
            {8});
  add_check("tanh", {{"a", u({6}, -2.0, 2.0)}}, [](auto& v) { return tanh(v[0]); }, {6});
  add_check("sigmoid", {{"a", u({6}, -4.0, 4.0)}}, [](auto& v) { return sigmoid(v[0]); }, {6});
  add_check("softplus", {{"a", u({6}, -4.0, 4.0)}}, [](auto& v) { return softplus(v[0]); }, {6});
  add_check("matmul", {{"a", u({3, 4})}, {"b", u({4, 2})}}, [](auto& v) { return matmul(v[0], v[1]); }, {3, 2});
  add_check("softmax", {{"a", u({3, 5}, -3.0, 3.0)}}, [](auto& v) { return softmax(v[0]); }, {3, 5});
  add_check("sum", {{"a", u({2, 3})}}, [](auto& v) { return reshape(sum(v[0]), {1}); }, {1});
  {
    auto idx = std::make_shared<std::vector<std::size_t>>(std::vector<std::size_t>{5, 0, 3, 3, 1, 2});
    add_check("gather", {{"a", u({6})}}, [idx](auto& v) { return gather(v[0], idx, {2, 3}); }, {2, 3});
  }
  add_check("reshape", {{"a", u({2, 3})}}, [](auto& v) { return reshape(v[0], {3, 2}); }, {3, 2});
  add_check("select", {{"a", u({3, 2, 2})}}, [](auto& v) { return select(v[0], 1); }, {2, 2});
  add_check("stack", {{"a", u({2, 2})}, {"b", u({2, 2})}}, [](auto& v) { return stack({v[0], v[1]}); }, {2, 2, 2});
  add_check("max_leading", {{"a", u({3, 4, 4})}}, [](auto& v) { return max_leading(v[0]); }, {4, 4});
  add_check("mean_leading", {{"a", u({3, 4, 4})}}, [](auto& v) { return mean_leading(v[0]); }, {4, 4});
  add_check("batched_outer", {{"q", u({3, 4})}, {"k", u({3, 4})}}, [](auto& v) { return batched_outer(v[0], v[1]); },
            {3, 4, 4});
  add_check("batched_matvec", {{"a", u({3, 4, 4})}, {"v", u({3, 4})}},
            [](auto& v) { return batched_matvec(v[0], v[1]); }, {3, 4});
  add_check("dft2", {{"re", u({2, 4, 6})}, {"im", u({2, 4, 6})}},
            [](auto& v) { return detail::complex_transform(v[0], v[1], -1, 1.0); }, {2, 2, 4, 6});
  add_check("conv2d", {{"x", u({2, 5, 5})}, {"w", u({3, 2, 3, 3})}, {"b", u({3})}},
            [](auto& v) { return conv2d(v[0], v[1], v[2]); }, {3, 5, 5});
  return checks;
}

}  // namespace freqdeno
