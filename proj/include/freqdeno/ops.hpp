#pragma once

// Differentiable operators recorded on a Tape.
//
// Binary elementwise ops broadcast in exactly one way: the smaller operand's
// shape (leading 1s dropped) must equal the trailing dimensions of the larger
// one, e.g. an H x W plane against a C x H x W stack.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

#include "freqdeno/tape.hpp"

namespace freqdeno {

namespace detail {

inline Tape& tape_of(Var a) {
  if (!a.tape) throw ContractError("variable is not attached to a tape");
  return *a.tape;
}

inline Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return tape_of(a);
}

inline Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i + 1 < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  const Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.rbegin(), s.rend(), big.rbegin());
}

/// Result shape of a broadcast binary op, or ShapeError.
inline Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return a;
  if (element_count(b) <= element_count(a) && is_suffix(b, a)) return a;
  if (element_count(a) < element_count(b) && is_suffix(a, b)) return b;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

template <class Fwd, class DA, class DB>
Var binary(Primitive p, Var a, Var b, Fwd f, DA da, DB db) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  Tensor out(broadcast_shape(x.shape(), y.shape(), primitive_name(p)));
  const std::size_t nx = x.size(), ny = y.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i % nx], y[i % ny]);
  return t.record(p, std::move(out), {a, b}, [a, b, da, db](const Tensor& g, Adjoints& adj) {
    const Tensor& x = adj.value(a);
    const Tensor& y = adj.value(b);
    const std::size_t nx = x.size(), ny = y.size();
    if (Tensor* ga = adj.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i % nx] += g[i] * da(x[i % nx], y[i % ny]);
    if (Tensor* gb = adj.slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % ny] += g[i] * db(x[i % nx], y[i % ny]);
  });
}

// `df(x, y)` is the derivative given input x and output y.
template <class Fwd, class D>
Var unary(Primitive p, Var a, Fwd f, D df) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const Var self{&t, t.size()};
  return t.record(p, std::move(out), {a}, [a, self, df](const Tensor& g, Adjoints& adj) {
    const Tensor& x = adj.value(a);
    const Tensor& y = adj.value(self);
    if (Tensor* ga = adj.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], y[i]);
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      Primitive::add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      Primitive::sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      Primitive::mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

/// Division follows IEEE semantics: a zero denominator yields +-Inf (check Tensor::all_finite).
inline Var div(Var a, Var b) {
  return detail::binary(
      Primitive::div, a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

/// atan2(y, x) in [-pi, pi). The adjoint at the origin is defined as zero.
inline Var atan2(Var y, Var x) {
  return detail::binary(
      Primitive::atan2, y, x,
      [](double yy, double xx) {
        const double r = std::atan2(yy, xx);
        return r == std::numbers::pi ? -std::numbers::pi : r;
      },
      [](double yy, double xx) {
        const double r2 = xx * xx + yy * yy;
        return r2 == 0.0 ? 0.0 : xx / r2;
      },
      [](double yy, double xx) {
        const double r2 = xx * xx + yy * yy;
        return r2 == 0.0 ? 0.0 : -yy / r2;
      });
}

inline Var scale(Var a, double k) {
  return detail::unary(
      Primitive::scale, a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

inline Var offset(Var a, double k) {
  return detail::unary(
      Primitive::offset, a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

/// max(x, k); the adjoint is zero where the floor is active.
inline Var clamp_min(Var a, double k) {
  return detail::unary(
      Primitive::clamp_min, a, [k](double x) { return std::max(x, k); },
      [k](double x, double) { return x > k ? 1.0 : 0.0; });
}

/// Square root; the adjoint at 0 is defined as zero.
inline Var sqrt(Var a) {
  return detail::unary(
      Primitive::sqrt, a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Var cos(Var a) {
  return detail::unary(
      Primitive::cos, a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

inline Var sin(Var a) {
  return detail::unary(
      Primitive::sin, a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

inline Var tanh(Var a) {
  return detail::unary(
      Primitive::tanh, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      Primitive::sigmoid, a, [](double x) { return detail::stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

/// log(1 + e^x), computed without overflow.
inline Var softplus(Var a) {
  return detail::unary(
      Primitive::softplus, a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return detail::stable_sigmoid(x); });
}

enum class ElementwiseOp { add, sub, mul, div, sqrt, cos, sin, atan2, scale };

/// Dispatcher over the elementwise set; `b` is required for binary kinds, `k` used by scale.
inline Var elementwise(ElementwiseOp op, Var a, std::optional<Var> b = std::nullopt, double k = 1.0) {
  auto need_b = [&]() -> Var {
    if (!b) throw ContractError("elementwise: binary op requires a second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, need_b());
    case ElementwiseOp::sub: return sub(a, need_b());
    case ElementwiseOp::mul: return mul(a, need_b());
    case ElementwiseOp::div: return div(a, need_b());
    case ElementwiseOp::atan2: return atan2(a, need_b());
    case ElementwiseOp::sqrt: return sqrt(a);
    case ElementwiseOp::cos: return cos(a);
    case ElementwiseOp::sin: return sin(a);
    case ElementwiseOp::scale: return scale(a, k);
  }
  throw ContractError("elementwise: unknown op");
}

/// (m x k) * (k x n).
inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0))
    throw ShapeError("matmul: " + to_string(x.shape()) + " x " + to_string(y.shape()));
  const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += xv * y[p * n + j];
    }
  return t.record(Primitive::matmul, std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, Adjoints& adj) {
    const Tensor& x = adj.value(a);
    const Tensor& y = adj.value(b);
    if (Tensor* ga = adj.slot(a))  // g * b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
          (*ga)[i * k + p] += s;
        }
    if (Tensor* gb = adj.slot(b))  // a^T * g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += xv * g[i * n + j];
        }
  });
}

/// Softmax along the last axis, with max subtraction.
inline Var softmax(Var a) {
  Tape& t = detail::tape_of(a);
  const Tensor& x = t.value(a);
  if (x.rank() == 0) throw ShapeError("softmax: rank-0 input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n ? x.size() / n : 0;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= s;
  }
  const Var self{&t, t.size()};
  return t.record(Primitive::softmax, std::move(out), {a}, [a, self, n, rows](const Tensor& g, Adjoints& adj) {
    Tensor* ga = adj.slot(a);
    if (!ga) return;
    const Tensor& y = adj.value(self);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

/// Sum of all elements as a rank-0 tensor.
inline Var sum(Var a) {
  Tape& t = detail::tape_of(a);
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return t.record(Primitive::sum, Tensor::scalar(s), {a}, [a](const Tensor& g, Adjoints& adj) {
    if (Tensor* ga = adj.slot(a))
      for (double& v : ga->data()) v += g[0];
  });
}

inline Var mean(Var a) {
  const std::size_t n = detail::tape_of(a).value(a).size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

/// out[i] = a[index[i]]; the adjoint scatter-adds.
inline Var gather(Var a, IndexMap index, Shape out_shape) {
  Tape& t = detail::tape_of(a);
  const Tensor& x = t.value(a);
  if (element_count(out_shape) != index->size())
    throw ShapeError("gather: index length " + std::to_string(index->size()) + " vs shape " + to_string(out_shape));
  Tensor out(std::move(out_shape));
  for (std::size_t i = 0; i < index->size(); ++i) {
    const std::size_t src = (*index)[i];
    if (src >= x.size()) throw ShapeError("gather: index out of range");
    out[i] = x[src];
  }
  return t.record(Primitive::gather, std::move(out), {a}, [a, index](const Tensor& g, Adjoints& adj) {
    if (Tensor* ga = adj.slot(a))
      for (std::size_t i = 0; i < index->size(); ++i) (*ga)[(*index)[i]] += g[i];
  });
}

inline Var reshape(Var a, Shape shape) {
  Tape& t = detail::tape_of(a);
  Tensor out = t.value(a).reshaped(std::move(shape));
  return t.record(Primitive::reshape, std::move(out), {a}, [a](const Tensor& g, Adjoints& adj) {
    if (Tensor* ga = adj.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

/// Slice `index` along axis 0.
inline Var select(Var a, std::size_t index) {
  Tape& t = detail::tape_of(a);
  const Tensor& x = t.value(a);
  if (x.rank() == 0 || index >= x.dim(0))
    throw ShapeError("select: index " + std::to_string(index) + " out of " + to_string(x.shape()));
  Shape s(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = element_count(s);
  std::vector<double> vals(x.data().begin() + static_cast<std::ptrdiff_t>(index * n),
                           x.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  return t.record(Primitive::select, Tensor(std::move(s), std::move(vals)), {a},
                  [a, index, n](const Tensor& g, Adjoints& adj) {
                    if (Tensor* ga = adj.slot(a))
                      for (std::size_t i = 0; i < n; ++i) (*ga)[index * n + i] += g[i];
                  });
}

/// Stacks equally shaped tensors along a new leading axis.
inline Var stack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  Tape& t = detail::tape_of(parts.front());
  const Shape inner = t.value(parts.front()).shape();
  const std::size_t n = element_count(inner);
  Shape s{parts.size()};
  s.insert(s.end(), inner.begin(), inner.end());
  Tensor out(std::move(s));
  for (std::size_t p = 0; p < parts.size(); ++p) {
    detail::tape_of(parts.front(), parts[p]);
    const Tensor& v = t.value(parts[p]);
    if (v.shape() != inner) throw ShapeError("stack: mismatched shapes");
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(p * n));
  }
  return t.record(Primitive::stack, std::move(out), parts, [parts, n](const Tensor& g, Adjoints& adj) {
    for (std::size_t p = 0; p < parts.size(); ++p)
      if (Tensor* gp = adj.slot(parts[p]))
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[p * n + i];
  });
}

/// Max over axis 0. The adjoint goes to the first argmax.
inline Var max_leading(Var a) {
  Tape& t = detail::tape_of(a);
  const Tensor& x = t.value(a);
  if (x.rank() < 2) throw ShapeError("max_leading: need rank >= 2, got " + to_string(x.shape()));
  const std::size_t c = x.dim(0);
  Shape s(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = element_count(s);
  Tensor out(std::move(s));
  auto argmax = std::make_shared<std::vector<std::size_t>>(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = x[i];
    for (std::size_t k = 1; k < c; ++k)
      if (x[k * n + i] > best) {
        best = x[k * n + i];
        (*argmax)[i] = k;
      }
    out[i] = best;
  }
  return t.record(Primitive::max_leading, std::move(out), {a}, [a, argmax, n](const Tensor& g, Adjoints& adj) {
    if (Tensor* ga = adj.slot(a))
      for (std::size_t i = 0; i < n; ++i) (*ga)[(*argmax)[i] * n + i] += g[i];
  });
}

/// Mean over axis 0.
inline Var mean_leading(Var a) {
  Tape& t = detail::tape_of(a);
  const Tensor& x = t.value(a);
  if (x.rank() < 2) throw ShapeError("mean_leading: need rank >= 2, got " + to_string(x.shape()));
  const std::size_t c = x.dim(0);
  Shape s(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = element_count(s);
  Tensor out(std::move(s));
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < n; ++i) out[i] += x[k * n + i];
  const double inv = 1.0 / static_cast<double>(c);
  for (double& v : out.data()) v *= inv;
  return t.record(Primitive::mean_leading, std::move(out), {a}, [a, c, n, inv](const Tensor& g, Adjoints& adj) {
    if (Tensor* ga = adj.slot(a))
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < n; ++i) (*ga)[k * n + i] += g[i] * inv;
  });
}

/// Per-row outer products: (d x n), (d x n) -> d x n x n with out[g,j,l] = q[g,j] * k[g,l].
inline Var batched_outer(Var q, Var k) {
  Tape& t = detail::tape_of(q, k);
  const Tensor& x = t.value(q);
  const Tensor& y = t.value(k);
  if (x.rank() != 2 || x.shape() != y.shape())
    throw ShapeError("batched_outer: " + to_string(x.shape()) + " vs " + to_string(y.shape()));
  const std::size_t d = x.dim(0), n = x.dim(1);
  Tensor out(Shape{d, n, n});
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) out[(g * n + j) * n + l] = x[g * n + j] * y[g * n + l];
  return t.record(Primitive::batched_outer, std::move(out), {q, k}, [q, k, d, n](const Tensor& gr, Adjoints& adj) {
    const Tensor& x = adj.value(q);
    const Tensor& y = adj.value(k);
    Tensor* gq = adj.slot(q);
    Tensor* gk = adj.slot(k);
    for (std::size_t g = 0; g < d; ++g)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
          const double v = gr[(g * n + j) * n + l];
          if (gq) (*gq)[g * n + j] += v * y[g * n + l];
          if (gk) (*gk)[g * n + l] += v * x[g * n + j];
        }
  });
}

/// Per-group matrix-vector product: (d x n x n), (d x n) -> d x n.
inline Var batched_matvec(Var a, Var v) {
  Tape& t = detail::tape_of(a, v);
  const Tensor& m = t.value(a);
  const Tensor& x = t.value(v);
  if (m.rank() != 3 || x.rank() != 2 || m.dim(0) != x.dim(0) || m.dim(1) != x.dim(1) || m.dim(2) != x.dim(1))
    throw ShapeError("batched_matvec: " + to_string(m.shape()) + " x " + to_string(x.shape()));
  const std::size_t d = x.dim(0), n = x.dim(1);
  Tensor out(Shape{d, n});
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l) s += m[(g * n + j) * n + l] * x[g * n + l];
      out[g * n + j] = s;
    }
  return t.record(Primitive::batched_matvec, std::move(out), {a, v}, [a, v, d, n](const Tensor& gr, Adjoints& adj) {
    const Tensor& m = adj.value(a);
    const Tensor& x = adj.value(v);
    Tensor* gm = adj.slot(a);
    Tensor* gx = adj.slot(v);
    for (std::size_t g = 0; g < d; ++g)
      for (std::size_t j = 0; j < n; ++j) {
        const double go = gr[g * n + j];
        for (std::size_t l = 0; l < n; ++l) {
          if (gm) (*gm)[(g * n + j) * n + l] += go * x[g * n + l];
          if (gx) (*gx)[g * n + l] += go * m[(g * n + j) * n + l];
        }
      }
  });
}

/// Same-size 2-D convolution (zero padding, odd square kernel).
/// x: Cin x H x W, weight: Cout x Cin x K x K, bias: Cout.
inline Var conv2d(Var x, Var weight, Var bias) {
  Tape& t = detail::tape_of(x, weight);
  detail::tape_of(x, bias);
  const Tensor& in = t.value(x);
  const Tensor& w = t.value(weight);
  const Tensor& b = t.value(bias);
  if (in.rank() != 3 || w.rank() != 4 || w.dim(1) != in.dim(0) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0 ||
      b.size() != w.dim(0))
    throw ShapeError("conv2d: input " + to_string(in.shape()) + ", weight " + to_string(w.shape()) + ", bias " +
                     to_string(b.shape()));
  const std::size_t cin = in.dim(0), h = in.dim(1), wd = in.dim(2), cout = w.dim(0), k = w.dim(2);
  const long r = static_cast<long>(k / 2);
  Tensor out(Shape{cout, h, wd});
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t wi = ((o * cin + c) * k + ky) * k + kx;
            for (std::size_t y = 0; y < h; ++y) {
              const long sy = static_cast<long>(y) + static_cast<long>(ky) - r;
              if (sy < 0 || sy >= static_cast<long>(h)) continue;
              for (std::size_t xx = 0; xx < wd; ++xx) {
                const long sx = static_cast<long>(xx) + static_cast<long>(kx) - r;
                if (sx < 0 || sx >= static_cast<long>(wd)) continue;
                fn((o * h + y) * wd + xx, (c * h + static_cast<std::size_t>(sy)) * wd + static_cast<std::size_t>(sx),
                   wi);
              }
            }
          }
  };
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < h * wd; ++i) out[o * h * wd + i] = b[o];
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += w[wi] * in[ii]; });
  return t.record(Primitive::conv2d, std::move(out), {x, weight, bias},
                  [x, weight, bias, for_each_tap, cout, h, wd](const Tensor& g, Adjoints& adj) {
                    const Tensor& in = adj.value(x);
                    const Tensor& w = adj.value(weight);
                    Tensor* gx = adj.slot(x);
                    Tensor* gw = adj.slot(weight);
                    Tensor* gb = adj.slot(bias);
                    if (gb)
                      for (std::size_t o = 0; o < cout; ++o)
                        for (std::size_t i = 0; i < h * wd; ++i) (*gb)[o] += g[o * h * wd + i];
                    if (gx || gw)
                      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                        if (gx) (*gx)[ii] += g[oi] * w[wi];
                        if (gw) (*gw)[wi] += g[oi] * in[ii];
                      });
                  });
}

}  // namespace freqdeno
