#pragma once

// 2-D DFT and polar-spectrum utilities.
//
// Convention: the forward transform is un-normalised and the inverse carries
// the full 1/(H*W), so dft2_inverse(dft2_forward(x)) == x.

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "freqdeno/ops.hpp"

namespace freqdeno {

/// Complex C x H x W spectrum as paired real/imaginary planes.
struct Spectrum {
  Var real;
  Var imag;
};

/// Amplitude/phase view. When `cos_plane`/`sin_plane` are set they replace the
/// phase in from_polar.
struct PolarSpectrum {
  Var amplitude;
  Var phase;
  std::optional<Var> cos_plane;
  std::optional<Var> sin_plane;
};

namespace detail {

/// cos/sin of 2*pi*k/n for k in [0, n). Quarter-turn entries are exact and the
/// table is mirrored so that entry n-k is the conjugate of entry k.
struct Twiddles {
  std::vector<double> c, s;

  explicit Twiddles(std::size_t n) : c(n), s(n) {
    for (std::size_t k = 0; 2 * k <= n; ++k) {
      double ck, sk;
      if ((4 * k) % n == 0) {
        switch ((4 * k) / n) {
          case 0: ck = 1.0, sk = 0.0; break;
          case 1: ck = 0.0, sk = 1.0; break;
          default: ck = -1.0, sk = 0.0; break;
        }
      } else {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        ck = std::cos(a);
        sk = std::sin(a);
      }
      c[k] = ck;
      s[k] = sk;
      if (k != 0 && k != n - k) {
        c[n - k] = ck;
        s[n - k] = -sk;
      }
    }
  }
};

/// out = scale * sum_{h,w} in[h,w] * exp(sign * 2*pi*i*(u*h/H + v*w/W)), per channel.
/// Row-column factorisation, O(C*H*W*(H+W)).
inline void transform2(const double* in_re, const double* in_im, double* out_re, double* out_im, std::size_t channels,
                       std::size_t height, std::size_t width, int sign, double scale) {
  const Twiddles th(height), tw(width);
  const double sg = sign < 0 ? -1.0 : 1.0;
  const std::size_t plane = height * width;
  std::vector<double> tr(plane), ti(plane);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double* xr = in_re + ch * plane;
    const double* xi = in_im ? in_im + ch * plane : nullptr;
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t v = 0; v < width; ++v) {
        double sr = 0.0, si = 0.0;
        for (std::size_t w = 0; w < width; ++w) {
          const std::size_t k = (v * w) % width;
          const double cr = tw.c[k], ci = sg * tw.s[k];
          const double ar = xr[h * width + w];
          const double ai = xi ? xi[h * width + w] : 0.0;
          sr += ar * cr - ai * ci;
          si += ar * ci + ai * cr;
        }
        tr[h * width + v] = sr;
        ti[h * width + v] = si;
      }
    double* yr = out_re + ch * plane;
    double* yi = out_im + ch * plane;
    for (std::size_t u = 0; u < height; ++u)
      for (std::size_t v = 0; v < width; ++v) {
        double sr = 0.0, si = 0.0;
        for (std::size_t h = 0; h < height; ++h) {
          const std::size_t k = (u * h) % height;
          const double cr = th.c[k], ci = sg * th.s[k];
          const double ar = tr[h * width + v], ai = ti[h * width + v];
          sr += ar * cr - ai * ci;
          si += ar * ci + ai * cr;
        }
        yr[u * width + v] = scale * sr;
        yi[u * width + v] = scale * si;
      }
  }
}

inline void check_planes(const Tensor& t, std::string_view what) {
  if (t.rank() != 3 || t.size() == 0)
    throw ShapeError(std::string(what) + ": expected non-empty C x H x W tensor, got " + to_string(t.shape()));
}

/// Differentiable complex 2-D transform; returns the packed [2, C, H, W] result
/// (index 0 real, 1 imaginary). `im` may be absent for real input.
inline Var complex_transform(Var re, std::optional<Var> im, int sign, double scale) {
  Tape& t = tape_of(re);
  const Tensor& xr = t.value(re);
  check_planes(xr, "dft2");
  if (im && t.value(*im).shape() != xr.shape()) throw ShapeError("dft2: real/imag shape mismatch");
  const std::size_t c = xr.dim(0), h = xr.dim(1), w = xr.dim(2), n = xr.size();
  Tensor out(Shape{2, c, h, w});
  transform2(xr.data().data(), im ? t.value(*im).data().data() : nullptr, out.data().data(),
             out.data().data() + n, c, h, w, sign, scale);
  // The transform matrix is symmetric, so the adjoint is the conjugate transform.
  auto backward = [re, im, sign, scale, c, h, w, n](const Tensor& g, Adjoints& adj) {
    Tensor* gr = adj.slot(re);
    Tensor* gi = im ? adj.slot(*im) : nullptr;
    if (!gr && !gi) return;
    std::vector<double> br(n), bi(n);
    transform2(g.data().data(), g.data().data() + n, br.data(), bi.data(), c, h, w, -sign, scale);
    if (gr)
      for (std::size_t i = 0; i < n; ++i) (*gr)[i] += br[i];
    if (gi)
      for (std::size_t i = 0; i < n; ++i) (*gi)[i] += bi[i];
  };
  if (im) return t.record(Primitive::dft2, std::move(out), {re, *im}, backward);
  return t.record(Primitive::dft2, std::move(out), {re}, backward);
}

/// Index map for a cyclic shift of the last two axes by (dy, dx).
inline IndexMap roll_index(const Shape& shape, std::size_t dy, std::size_t dx) {
  if (shape.size() < 2) throw ShapeError("shift: need rank >= 2, got " + to_string(shape));
  const std::size_t h = shape[shape.size() - 2], w = shape.back();
  const std::size_t planes = element_count(shape) / (h * w);
  auto idx = std::make_shared<std::vector<std::size_t>>(element_count(shape));
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        // out[(y + dy) % h, (x + dx) % w] = in[y, x]
        const std::size_t oy = (y + dy) % h, ox = (x + dx) % w;
        (*idx)[p * h * w + oy * w + ox] = p * h * w + y * w + x;
      }
  return idx;
}

}  // namespace detail

/// Forward 2-D DFT of a real C x H x W feature map (no normalisation).
inline Spectrum dft2_forward(Var m) {
  Var packed = detail::complex_transform(m, std::nullopt, -1, 1.0);
  return {select(packed, 0), select(packed, 1)};
}

struct InverseResult {
  Var image;            ///< real part of the inverse transform
  double imag_residue;  ///< max |imaginary part| that was discarded
};

/// Inverse 2-D DFT with 1/(H*W) normalisation; keeps the real part.
inline InverseResult dft2_inverse(const Spectrum& s) {
  Tape& t = detail::tape_of(s.real, s.imag);
  const Tensor& re = t.value(s.real);
  detail::check_planes(re, "dft2_inverse");
  const double scale = 1.0 / static_cast<double>(re.dim(1) * re.dim(2));
  Var packed = detail::complex_transform(s.real, s.imag, +1, scale);
  const Tensor& p = t.value(packed);
  double residue = 0.0;
  for (std::size_t i = p.size() / 2; i < p.size(); ++i) residue = std::max(residue, std::abs(p[i]));
  return {select(packed, 0), residue};
}

/// amplitude = sqrt(R^2 + I^2), phase = atan2(I, R) in [-pi, pi).
inline PolarSpectrum to_polar(const Spectrum& s) {
  Var amp = sqrt(add(mul(s.real, s.real), mul(s.imag, s.imag)));
  Var phase = atan2(s.imag, s.real);
  return {amp, phase, std::nullopt, std::nullopt};
}

/// Recombine amplitude with phase; uses the decoupled (cos, sin) planes when present.
inline Spectrum from_polar(const PolarSpectrum& p) {
  if (p.cos_plane.has_value() != p.sin_plane.has_value())
    throw ContractError("from_polar: decoupled view needs both cos and sin planes");
  if (p.cos_plane) return {mul(p.amplitude, *p.cos_plane), mul(p.amplitude, *p.sin_plane)};
  return {mul(p.amplitude, cos(p.phase)), mul(p.amplitude, sin(p.phase))};
}

/// Move bin (u, v) to ((u + H/2) mod H, (v + W/2) mod W) on every plane.
inline Var central_shift(Var plane) {
  const Shape& s = detail::tape_of(plane).value(plane).shape();
  const std::size_t h = s.at(s.size() - 2), w = s.back();
  return gather(plane, detail::roll_index(s, h / 2, w / 2), s);
}

/// Exact inverse of central_shift (also for odd extents).
inline Var inverse_shift(Var plane) {
  const Shape& s = detail::tape_of(plane).value(plane).shape();
  const std::size_t h = s.at(s.size() - 2), w = s.back();
  return gather(plane, detail::roll_index(s, h - h / 2, w - w / 2), s);
}

inline Spectrum central_shift(const Spectrum& s) { return {central_shift(s.real), central_shift(s.imag)}; }
inline Spectrum inverse_shift(const Spectrum& s) { return {inverse_shift(s.real), inverse_shift(s.imag)}; }

inline PolarSpectrum central_shift(const PolarSpectrum& p) {
  PolarSpectrum out{central_shift(p.amplitude), central_shift(p.phase), std::nullopt, std::nullopt};
  if (p.cos_plane) out.cos_plane = central_shift(*p.cos_plane);
  if (p.sin_plane) out.sin_plane = central_shift(*p.sin_plane);
  return out;
}

inline PolarSpectrum inverse_shift(const PolarSpectrum& p) {
  PolarSpectrum out{inverse_shift(p.amplitude), inverse_shift(p.phase), std::nullopt, std::nullopt};
  if (p.cos_plane) out.cos_plane = inverse_shift(*p.cos_plane);
  if (p.sin_plane) out.sin_plane = inverse_shift(*p.sin_plane);
  return out;
}

/// Phase as the orthogonal pair (cos, sin).
inline std::pair<Var, Var> decouple_phase(Var phase) { return {cos(phase), sin(phase)}; }

inline constexpr double kHarmonizeEps = 1e-8;

/// Projects (c, s) back onto the unit circle: r = sqrt(max(c^2 + s^2, eps)).
/// eps only acts as a floor, so pairs with c^2 + s^2 >= eps land exactly on the
/// circle and (0, 0) maps to (0, 0) with finite gradients.
inline std::pair<Var, Var> harmonize_phase(Var c, Var s, double eps = kHarmonizeEps) {
  Tape& t = detail::tape_of(c, s);
  if (t.value(c).shape() != t.value(s).shape()) throw ShapeError("harmonize_phase: shape mismatch");
  if (!(eps > 0.0)) throw ContractError("harmonize_phase: eps must be positive");
  Var r = sqrt(clamp_min(add(mul(c, c), mul(s, s)), eps));
  return {div(c, r), div(s, r)};
}

}  // namespace freqdeno
