#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"

using namespace freqdeno;

namespace {

struct Sizes {
  std::size_t c, h, w;
};

std::vector<Sizes> corpus_sizes() {
  std::vector<Sizes> out;
  for (std::size_t c : {1, 2, 3})
    for (std::size_t h : {4, 8, 16})
      for (std::size_t w : {4, 8, 16}) out.push_back({c, h, w});
  return out;
}

}  // namespace

TEST(Dft, MatchesDirectSummation) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = trial % 2 ? 8 : 4, c = 1 + trial % 3;
    const Tensor x = uniform({c, n, n}, -1.0, 1.0, rng);
    const auto ref = oracle::dft2_direct(oracle::to_complex(x), c, n, n);
    Tape t;
    const Spectrum s = dft2_forward(t.constant(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(t.value(s.real)[i], ref[i].real(), 1e-9);
      EXPECT_NEAR(t.value(s.imag)[i], ref[i].imag(), 1e-9);
    }
  }
}

TEST(Dft, NonSquareAndOddExtentsMatchOracle) {
  std::mt19937_64 rng(22);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{3, 5}, {6, 4}, {1, 7}, {5, 1}}) {
    const Tensor x = uniform({2, h, w}, -1.0, 1.0, rng);
    const auto ref = oracle::dft2_direct(oracle::to_complex(x), 2, h, w);
    Tape t;
    const Spectrum s = dft2_forward(t.constant(x));
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(t.value(s.real)[i], ref[i].real(), 1e-10);
      EXPECT_NEAR(t.value(s.imag)[i], ref[i].imag(), 1e-10);
    }
    const auto inv = dft2_inverse(s);
    EXPECT_LT(max_abs_diff(t.value(inv.image), x), 1e-12);
  }
}

TEST(Dft, ConstantMapHasOnlyDc) {
  Tape t;
  const Spectrum s = dft2_forward(t.constant(Tensor({1, 4, 4}, 1.0)));
  EXPECT_DOUBLE_EQ(t.value(s.real)[0], 16.0);
  for (std::size_t i = 1; i < 16; ++i) {
    EXPECT_NEAR(t.value(s.real)[i], 0.0, 1e-12);
    EXPECT_NEAR(t.value(s.imag)[i], 0.0, 1e-12);
  }
}

TEST(Dft, RoundTripParsevalHermitian) {
  std::mt19937_64 rng(23);
  const auto sizes = corpus_sizes();
  for (int trial = 0; trial < 200; ++trial) {
    const auto [c, h, w] = sizes[trial % sizes.size()];
    const Tensor x = uniform({c, h, w}, -1.0, 1.0, rng);
    Tape t;
    const Spectrum s = dft2_forward(t.constant(x));
    const auto inv = dft2_inverse(s);
    ASSERT_LT(max_abs_diff(t.value(inv.image), x), 1e-10);
    EXPECT_LT(inv.imag_residue, 1e-12);

    const Tensor& re = t.value(s.real);
    const Tensor& im = t.value(s.imag);
    double es = 0.0, ef = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      es += x[i] * x[i];
      ef += re[i] * re[i] + im[i] * im[i];
    }
    EXPECT_NEAR(es, ef / static_cast<double>(h * w), 1e-9);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          const std::size_t a = (k * h + u) * w + v, b = (k * h + (h - u) % h) * w + (w - v) % w;
          ASSERT_NEAR(re[a], re[b], 1e-10);
          ASSERT_NEAR(im[a], -im[b], 1e-10);
        }
  }
}

TEST(Dft, NyquistBinsAreExactlyReal) {
  std::mt19937_64 rng(24);
  const Tensor x = uniform({1, 8, 8}, -1.0, 1.0, rng);
  Tape t;
  const Spectrum s = dft2_forward(t.constant(x));
  for (std::size_t u : {0, 4})
    for (std::size_t v : {0, 4}) EXPECT_EQ(t.value(s.imag)[u * 8 + v], 0.0);
}

TEST(Dft, RejectsWrongRank) {
  Tape t;
  EXPECT_THROW(dft2_forward(t.constant(Tensor({4, 4}))), ShapeError);
  EXPECT_THROW(dft2_forward(t.constant(Tensor({0, 4, 4}))), ShapeError);
}

TEST(Dft, AdjointMatchesFiniteDifferences) {
  std::mt19937_64 rng(25);
  const Tensor x = uniform({2, 4, 6}, -1.0, 1.0, rng);
  const Tensor rr = uniform({2, 4, 6}, -1.0, 1.0, rng), ri = uniform({2, 4, 6}, -1.0, 1.0, rng);
  const auto rep = gradcheck(
      [&](Tape& t, Var v) {
        const Spectrum s = dft2_forward(v);
        return add(sum(mul(s.real, t.constant(rr))), sum(mul(s.imag, t.constant(ri))));
      },
      x, 1e-5, 1e-7);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Polar, RoundTripRecoversSpectrum) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = uniform({2, 8, 8}, -1.0, 1.0, rng);
    Tape t;
    const Spectrum s = dft2_forward(t.constant(x));
    const PolarSpectrum p = to_polar(s);
    for (double v : t.value(p.phase).data()) {
      EXPECT_GE(v, -std::numbers::pi);
      EXPECT_LT(v, std::numbers::pi);
    }
    const Spectrum back = from_polar(p);
    EXPECT_LT(max_abs_diff(t.value(back.real), t.value(s.real)), 1e-12);
    EXPECT_LT(max_abs_diff(t.value(back.imag), t.value(s.imag)), 1e-12);
    auto [c, sn] = decouple_phase(p.phase);
    PolarSpectrum d = p;
    d.cos_plane = c;
    d.sin_plane = sn;
    const Spectrum back2 = from_polar(d);
    EXPECT_LT(max_abs_diff(t.value(back2.real), t.value(s.real)), 1e-12);
  }
}

TEST(Polar, HalfDecoupledViewIsRejected) {
  Tape t;
  PolarSpectrum p{t.constant(Tensor({1, 2, 2}, 1.0)), t.constant(Tensor({1, 2, 2})), std::nullopt, std::nullopt};
  p.cos_plane = p.phase;
  EXPECT_THROW(from_polar(p), ContractError);
}

TEST(Shift, MovesDcToCentreAndInverts) {
  std::mt19937_64 rng(27);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {4, 6}, {5, 7}, {1, 3}}) {
    Tensor x = uniform({2, h, w}, -1.0, 1.0, rng);
    x[0] = 100.0;
    Tape t;
    Var s = central_shift(t.constant(x));
    EXPECT_EQ(t.value(s)[(h / 2) * w + w / 2], 100.0);
    EXPECT_EQ(t.value(inverse_shift(s)), x);
    auto a = x.values(), b = t.value(s).values();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    if (h % 2 == 0 && w % 2 == 0) EXPECT_EQ(t.value(central_shift(s)), x);
  }
}

TEST(Harmonize, UnitCircleForRandomGates) {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor ph = uniform({2, 8, 8}, -std::numbers::pi, std::numbers::pi, rng);
    const Tensor gate = uniform({8, 8}, 1e-3, 1.0, rng);
    Tape t;
    auto [c, s] = decouple_phase(t.constant(ph));
    auto [hc, hs] = harmonize_phase(mul(c, t.constant(gate)), mul(s, t.constant(gate)));
    for (std::size_t i = 0; i < ph.size(); ++i) {
      const double r = t.value(hc)[i] * t.value(hc)[i] + t.value(hs)[i] * t.value(hs)[i];
      EXPECT_NEAR(r, 1.0, 1e-12);
    }
  }
}

TEST(Harmonize, KnownTriangleAndFloor) {
  Tape t;
  auto [c, s] = harmonize_phase(t.constant(Tensor({3}, {0.6 * 0.3, 3.0, 1e-5})),
                                t.constant(Tensor({3}, {0.8 * 0.3, 4.0, 0.0})));
  EXPECT_NEAR(t.value(c)[0], 0.6, 1e-15);
  EXPECT_NEAR(t.value(s)[0], 0.8, 1e-15);
  EXPECT_NEAR(t.value(c)[1], 0.6, 1e-15);
  // below the floor the pair is scaled by 1/sqrt(eps) instead of normalised
  EXPECT_NEAR(t.value(c)[2], 1e-5 / std::sqrt(kHarmonizeEps), 1e-12);
}

TEST(Harmonize, ChainGradcheck) {
  std::mt19937_64 rng(29);
  const Tensor x = uniform({2, 4, 4}, -1.0, 1.0, rng), r = uniform({2, 4, 4}, -1.0, 1.0, rng);
  const Tensor gate = uniform({4, 4}, 0.2, 1.0, rng);
  const auto rep = gradcheck(
      [&](Tape& t, Var v) {
        PolarSpectrum p = to_polar(dft2_forward(v));
        auto [c, s] = decouple_phase(p.phase);
        std::tie(p.cos_plane, p.sin_plane) =
            harmonize_phase(mul(c, t.constant(gate)), mul(s, t.constant(gate)));
        return sum(mul(dft2_inverse(from_polar(p)).image, t.constant(r)));
      },
      x, 1e-6, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Harmonize, ZeroPairStaysFinite) {
  Tape t;
  Var z = t.leaf(Tensor({3}));
  auto [c, s] = harmonize_phase(z, z);
  EXPECT_EQ(t.value(c), Tensor({3}));
  const auto g = t.backward(sum(add(c, s)));
  EXPECT_TRUE(g[z].all_finite());
  EXPECT_THROW(harmonize_phase(z, z, 0.0), ContractError);
}
