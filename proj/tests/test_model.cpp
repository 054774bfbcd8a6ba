#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "wanlab/model.hpp"

using namespace wanlab;
using namespace testutil;
using Catch::Approx;

namespace {

const std::vector<std::pair<std::string, std::map<std::string, double>>> kAllPresets = {
    {"chain_dimer", {{"t1", 1.0}, {"t2", 0.04}}},
    {"chain_dimer", {{"t1", 1.0}, {"t2", 0.0}}},
    {"chern2d", {{"m", 4.0}}},
    {"chern2d", {{"m", 1.0}}},
    {"pg_glide", {}},
    {"dihedral_dimer", {}},
    {"dihedral_reflect", {}},
    {"heis_cayley", {}},
    {"hofstadter", {{"p", 1.0}, {"q", 3.0}}},
};

}  // namespace

TEST_CASE("presets build exactly self-adjoint Hamiltonians", "[model]") {
  for (const auto& [name, params] : kAllPresets) {
    const auto m = build_model(name, params);
    REQUIRE(m.H.rows() == m.d);
    REQUIRE((involution(m.H) - m.H).frobenius() == 0.0);
    REQUIRE(m.H.support_radius() <= m.hop_radius);
  }
  REQUIRE_THROWS_AS(build_model("nope"), std::invalid_argument);
}

TEST_CASE("truncation is exactly Hermitian with the right dimension", "[model]") {
  for (const auto& [name, params] : kAllPresets) {
    const auto m = build_model(name, params);
    const int R = 4;
    const Mat T = truncate_model(m, R);
    REQUIRE(static_cast<std::size_t>(T.rows()) == m.G->ball_size(R) * m.d);
    REQUIRE((T - T.adjoint()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("single-band free chain matches the closed form", "[model]") {
  auto G = GroupDescriptor::zd(1);
  GammaSequence h(G, 1, 1);
  h.add(Elem{1, 0, 0, 0}, Mat::Constant(1, 1, 1.0));
  h.add(Elem{-1, 0, 0, 0}, Mat::Constant(1, 1, 1.0));
  CrystalModel m(G, 1, h);
  m.hop_radius = 1;

  const Mat T1 = truncate_model(m, 1);
  REQUIRE(T1.rows() == 3);
  const auto e3 = spectrum(T1);
  REQUIRE(e3[0] == Approx(-std::sqrt(2.0)).margin(1e-12));
  REQUIRE(e3[1] == Approx(0.0).margin(1e-12));
  REQUIRE(e3[2] == Approx(std::sqrt(2.0)).margin(1e-12));

  // open chain on N sites: eigenvalues 2 cos(j pi / (N+1))
  const int R = 14;
  const auto eigs = spectrum(truncate_model(m, R));
  const int N = 2 * R + 1;
  std::vector<double> expect;
  for (int j = 1; j <= N; ++j) expect.push_back(2.0 * std::cos(M_PI * j / (N + 1)));
  std::sort(expect.begin(), expect.end());
  for (int i = 0; i < N; ++i) REQUIRE(eigs[static_cast<size_t>(i)] == Approx(expect[static_cast<size_t>(i)]).margin(1e-10));
}

TEST_CASE("dimerized chain limits", "[model]") {
  // fully dimerized: flat bands at +-t1
  const auto flat = build_model("chain_dimer", {{"t1", 1.0}, {"t2", 0.0}});
  for (double e : spectrum(truncate_model(flat, 6)))
    REQUIRE(std::abs(std::abs(e) - 1.0) < 1e-10);

  // uniform hopping: the dimer cover of the free chain
  const auto metal = build_model("chain_dimer", {{"t1", 1.0}, {"t2", 1.0}});
  const int R = 10;
  const auto eigs = spectrum(truncate_model(metal, R));
  const int N = 2 * (2 * R + 1);
  std::vector<double> expect;
  for (int j = 1; j <= N; ++j) expect.push_back(2.0 * std::cos(M_PI * j / (N + 1)));
  std::sort(expect.begin(), expect.end());
  for (int i = 0; i < N; ++i) REQUIRE(eigs[static_cast<size_t>(i)] == Approx(expect[static_cast<size_t>(i)]).margin(1e-10));
}

TEST_CASE("detect_gaps windows and margins", "[model]") {
  const auto flat = build_model("chain_dimer", {{"t1", 1.0}, {"t2", 0.0}});
  const auto ws = detect_gaps(spectrum(truncate_model(flat, 6)), 0.5);
  REQUIRE(ws.size() == 2);
  REQUIRE(ws[0].valid());
  REQUIRE(ws[0].contains(-1.0));
  REQUIRE_FALSE(ws[0].contains(1.0));
  REQUIRE(ws[0].margin_hi == Approx(2.0).margin(0.05));
  REQUIRE(ws[0].margin_lo > 1e98);
  REQUIRE(ws[1].contains(1.0));
  REQUIRE(ws[1].margin_lo == Approx(2.0).margin(0.05));

  // metallic chain: level spacing tops out around 2 pi / N, no real gap
  const auto metal = build_model("chain_dimer", {{"t1", 1.0}, {"t2", 1.0}});
  const auto none = detect_gaps(spectrum(truncate_model(metal, 12)), 0.2);
  REQUIRE(none.empty());
}

TEST_CASE("trivial Chern preset is gapped around zero", "[model]") {
  const auto m = build_model("chern2d", {{"m", 4.0}});
  double min_abs = 1e9;
  const int N = 64;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const std::vector<double> k = {2 * M_PI * i / N, 2 * M_PI * j / N};
      for (double e : spectrum(bloch_symbol(m.H, k))) min_abs = std::min(min_abs, std::abs(e));
    }
  REQUIRE(min_abs > 1.9);

  const auto ws = detect_gaps(spectrum(truncate_model(m, 8)), 0.5);
  REQUIRE(ws.size() == 2);
  REQUIRE(ws[0].margin_hi > 3.5);
}

TEST_CASE("bloch symbol is a *-homomorphism", "[model]") {
  auto G = GroupDescriptor::zd(2);
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_sequence(G, 2, 2, 2, rng);
    const auto b = random_sequence(G, 2, 2, 2, rng);
    const auto ab = convolve(a, b);
    for (const auto& k : {std::vector<double>{0.3, -1.2}, {2.0, 0.7}}) {
      REQUIRE((bloch_symbol(ab, k) - bloch_symbol(a, k) * bloch_symbol(b, k)).norm() < 1e-12);
      REQUIRE((bloch_symbol(involution(a), k) - bloch_symbol(a, k).adjoint()).norm() < 1e-12);
    }
  }
}

TEST_CASE("magnetic symbol matches the Harper closed form", "[model]") {
  const auto m = build_model("hofstadter", {{"p", 1.0}, {"q", 3.0}});
  const int q = 3;
  const double theta = 1.0 / 3.0;
  for (double k1 : {0.0, 0.9, 2.2})
    for (double k2 : {0.0, 1.3, -2.0}) {
      Mat H = Mat::Zero(q, q);
      for (int b = 0; b < q; ++b) {
        H(b, b) = 2.0 * std::cos(k1 + 2.0 * M_PI * theta * b);
        if (b + 1 < q) {
          H(b, b + 1) += 1.0;
          H(b + 1, b) += 1.0;
        }
      }
      H(q - 1, 0) += cplx(std::cos(k2), std::sin(k2));
      H(0, q - 1) += cplx(std::cos(k2), -std::sin(k2));
      REQUIRE((magnetic_symbol(m.H, k1, k2, q) - H).norm() < 1e-13);
    }
}

TEST_CASE("magnetic symbol is a *-homomorphism for the twisted algebra", "[model]") {
  auto G = GroupDescriptor::twisted_z2(1.0 / 3.0);
  std::mt19937_64 rng(32);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_sequence(G, 1, 1, 2, rng);
    const auto b = random_sequence(G, 1, 1, 2, rng);
    const auto ab = convolve(a, b);
    for (double k1 : {0.0, 1.1})
      for (double k2 : {0.4, -0.8}) {
        const Mat A = magnetic_symbol(a, k1, k2, 3);
        const Mat B = magnetic_symbol(b, k1, k2, 3);
        REQUIRE((magnetic_symbol(ab, k1, k2, 3) - A * B).norm() < 1e-12);
        REQUIRE((magnetic_symbol(involution(a), k1, k2, 3) - A.adjoint()).norm() < 1e-12);
      }
  }
}

TEST_CASE("Hofstadter spectrum has three bands", "[model]") {
  const auto m = build_model("hofstadter", {{"p", 1.0}, {"q", 3.0}});
  std::vector<double> eigs;
  const int N = 24;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (double e : spectrum(magnetic_symbol(m.H, 2 * M_PI * i / N, 2 * M_PI * j / N, 3)))
        eigs.push_back(e);
  std::sort(eigs.begin(), eigs.end());
  const auto ws = detect_gaps(eigs, 0.3);
  REQUIRE(ws.size() == 3);

  // open-boundary eigenvalues stay within the Bloch hull and mostly in-band
  const auto obc = spectrum(truncate_model(m, 8));
  int inside = 0;
  for (double e : obc) {
    REQUIRE(e > eigs.front() - 0.1);
    REQUIRE(e < eigs.back() + 0.1);
    for (const auto& w : ws)
      if (e >= w.lo - 0.05 && e <= w.hi + 0.05) {
        ++inside;
        break;
      }
  }
  REQUIRE(inside > static_cast<int>(0.85 * obc.size()));
}

TEST_CASE("truncations commute with projective right translations in the bulk", "[model]") {
  for (const auto& [name, params] : kAllPresets) {
    const auto m = build_model(name, params);
    const int R = 5;
    const auto ball = m.G->ball(R);
    const Mat T = truncate_model(m, R);
    for (const auto& g : m.G->generators) {
      // blocked right translation
      SpMat Rg(static_cast<Eigen::Index>(ball.size()) * m.d,
               static_cast<Eigen::Index>(ball.size()) * m.d);
      {
        const SpMat base = right_translation(m.G, ball, g);
        std::vector<Eigen::Triplet<cplx>> trip;
        for (int k = 0; k < base.outerSize(); ++k)
          for (SpMat::InnerIterator it(base, k); it; ++it)
            for (int s = 0; s < m.d; ++s)
              trip.emplace_back(it.row() * m.d + s, it.col() * m.d + s, it.value());
        Rg.setFromTriplets(trip.begin(), trip.end());
      }
      const Mat C = T * Mat(Rg) - Mat(Rg) * T;
      // interior rows: stay away from the edge by hop radius + |g|
      m.G->ensure_radius(R + 2);
      for (std::size_t i = 0; i < ball.size(); ++i) {
        if (m.G->word_length(ball[i]) > R - m.hop_radius - 1) continue;
        for (int s = 0; s < m.d; ++s)
          REQUIRE(C.row(static_cast<Eigen::Index>(i) * m.d + s).cwiseAbs().maxCoeff() < 1e-13);
      }
    }
  }
}

TEST_CASE("decay fits distinguish local, exponential, and slow kernels", "[fit]") {
  auto G = GroupDescriptor::zd(2);

  GammaSequence local(G, 1, 1);
  local.set(Elem{0, 0, 0, 0}, Mat::Constant(1, 1, 1.0));
  local.set(Elem{1, 0, 0, 0}, Mat::Constant(1, 1, 0.3));
  const auto f0 = fit_decay(local);
  REQUIRE(f0.strictly_local);
  REQUIRE(std::isinf(f0.alpha));
  REQUIRE(f0.admissible);

  GammaSequence expo(G, 1, 1);
  for (const auto& g : G->ball(10))
    expo.set(g, Mat::Constant(1, 1, 2.0 * std::exp(-0.7 * G->word_length(g))));
  const auto f1 = fit_decay(expo);
  REQUIRE(f1.alpha == Approx(0.7).margin(1e-6));
  REQUIRE(f1.C_exp == Approx(2.0).margin(1e-6));
  REQUIRE(f1.resid_exp < 1e-10);
  REQUIRE(f1.admissible);

  GammaSequence slow(G, 1, 1);
  for (const auto& g : G->ball(12))
    slow.set(g, Mat::Constant(1, 1, std::pow(1.0 + G->word_length(g), -1.5)));
  const auto f2 = fit_decay(slow);
  REQUIRE(f2.s == Approx(1.5).margin(1e-6));
  REQUIRE_FALSE(f2.admissible);
  REQUIRE(f2.exp_ok == false);
}
