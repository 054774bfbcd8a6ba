#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "wanlab/smoothing.hpp"

using namespace wanlab;
using namespace testutil;
using Catch::Approx;

namespace {

GammaSequence local_rank1_projector(const GroupRef& G) {
  Mat blk(2, 2);
  blk << 0.5, -0.5, -0.5, 0.5;
  return GammaSequence::delta(G, Elem{0, 0, 0, 0}, blk);
}

}  // namespace

TEST_CASE("holomorphic_step on scaled and exact projections", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  const auto p = local_rank1_projector(G);

  double gap = 0;
  const auto q1 = holomorphic_step(p, 6, &gap);
  REQUIRE((q1 - p).frobenius() < 1e-10);
  REQUIRE(gap > 0.05);

  const auto q2 = holomorphic_step(0.9 * p, 6);
  REQUIRE((q2 - p).frobenius() < 1e-10);
}

TEST_CASE("holomorphic_step rejects spectrum at one half", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  const auto q = GammaSequence::scalar_delta(G, Elem{0, 0, 0, 0}, 0.5);
  try {
    holomorphic_step(q, 4);
    FAIL("expected NoSpectralGap");
  } catch (const NoSpectralGap& e) {
    REQUIRE(std::string(e.what()).find("no spectral gap at 1/2") != std::string::npos);
    REQUIRE_FALSE(e.offending.empty());
    REQUIRE(e.offending.front() == Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("polar_unitary fixed points and scalars", "[smoothing]") {
  auto G = GroupDescriptor::zd(2);
  const auto shift = GammaSequence::scalar_delta(G, Elem{1, 0, 0, 0});
  const auto u1 = polar_unitary(shift, 6);
  REQUIRE((u1 - shift).frobenius() < 1e-12);

  const auto two = GammaSequence::scalar_delta(G, Elem{0, 0, 0, 0}, 2.0);
  const auto u2 = polar_unitary(two, 6);
  REQUIRE((u2 - GammaSequence::identity(G, 1)).frobenius() < 1e-12);

  // generic invertible z: u is unitary and close to z for z near unitary
  std::mt19937_64 rng(21);
  const auto z = GammaSequence::identity(G, 2) + 0.2 * random_sequence(G, 2, 2, 1, rng);
  PolarReport rep;
  const auto u = polar_unitary(z, 8, &rep);
  const auto defect = convolve(involution(u), u) - GammaSequence::identity(G, 2);
  REQUIRE(defect.l1_norm() < 1e-8);
  REQUIRE(rep.iterations <= 100);
  REQUIRE(rep.sigma_min > 1e-6);
}

TEST_CASE("polar_unitary reports non-invertibility", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  const auto z = GammaSequence::scalar_delta(G, Elem{0, 0, 0, 0}, 1e-9);
  try {
    polar_unitary(z, 4);
    FAIL("expected NotInvertible");
  } catch (const NotInvertible& e) {
    REQUIRE(std::string(e.what()).find("not invertible at radius") != std::string::npos);
    REQUIRE(e.sigma_min < 1e-6);
  }
}

TEST_CASE("polar_unitary in the twisted algebra", "[smoothing]") {
  auto G = GroupDescriptor::twisted_z2(1.0 / 3.0);
  std::mt19937_64 rng(22);
  const auto z = GammaSequence::identity(G, 1) + 0.25 * random_sequence(G, 1, 1, 1, rng);
  const auto u = polar_unitary(z, 8);
  const auto defect = convolve(involution(u), u) - GammaSequence::identity(G, 1);
  REQUIRE(defect.l1_norm() < 1e-8);
}

TEST_CASE("projection_smoothing runs the full bound chain on the band fixture", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  const auto p = synthetic_band_projector(G);

  // the fixture really is a projection
  REQUIRE(operator_norm(convolve(p, p) - p, 16) < 1e-10);
  REQUIRE((involution(p) - p).frobenius() < 1e-12);

  auto [q, u, rep] = projection_smoothing(p, 2, 16);

  REQUIRE(rep.eps < 1.0 / 12.0);
  REQUIRE(rep.qn_defect < 3.0 * rep.eps);
  REQUIRE(rep.gap > 0.05);
  REQUIRE(rep.pq_distance < 1.0 / 12.0 + 1.0 / 8.0);
  REQUIRE(rep.pq_distance < 1.0);
  REQUIRE(rep.unitary_defect < 1e-8);

  // q lives on the truncated block range
  for (const auto& [g, blk] : q.entries()) {
    REQUIRE(blk.bottomRows(2).norm() < 1e-12);
    REQUIRE(blk.rightCols(2).norm() < 1e-12);
  }
  // q is an idempotent self-adjoint kernel
  REQUIRE((convolve(q, q) - q).l1_norm() < 1e-8);
  REQUIRE((involution(q) - q).frobenius() < 1e-10);

  // u conjugates p onto q
  const auto conj = convolve(convolve(u, p), involution(u));
  REQUIRE((conj - q).l1_norm() < 1e-8);

  // rank is preserved: compare traces at the identity
  const double trp = p.at(Elem{0, 0, 0, 0}).trace().real();
  const double trq = q.at(Elem{0, 0, 0, 0}).trace().real();
  REQUIRE(trp == Approx(2.0).margin(1e-6));
  REQUIRE(trq == Approx(trp).margin(1e-6));
}

TEST_CASE("projection_smoothing rejects too-coarse block truncation", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  Mat blk = Mat::Zero(4, 4);
  blk(0, 0) = blk(0, 3) = blk(3, 0) = blk(3, 3) = 0.5;  // rank-1 across the cut
  const auto p = GammaSequence::delta(G, Elem{0, 0, 0, 0}, blk);
  try {
    projection_smoothing(p, 2, 6);
    FAIL("expected TruncationTooCoarse");
  } catch (const TruncationTooCoarse& e) {
    REQUIRE(std::string(e.what()).find("increase n_trunc") != std::string::npos);
    REQUIRE(e.eps >= 1.0 / 12.0);
  }
}

TEST_CASE("projection_smoothing keeps already-truncated projections fixed", "[smoothing]") {
  auto G = GroupDescriptor::zd(1);
  Mat blk = Mat::Zero(4, 4);
  blk.topLeftCorner(2, 2) << 0.5, -0.5, -0.5, 0.5;
  const auto p = GammaSequence::delta(G, Elem{0, 0, 0, 0}, blk);
  auto [q, u, rep] = projection_smoothing(p, 2, 6);
  REQUIRE((q - p).frobenius() < 1e-10);
  REQUIRE((u - GammaSequence::identity(G, 4)).frobenius() < 1e-10);
  REQUIRE(rep.eps < 1e-12);
}
