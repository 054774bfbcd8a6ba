#pragma once

// Holomorphic functional calculus step, Newton-Schulz polar decomposition,
// and the constructive projection-smoothing chain built from them.

#include <sstream>

#include "wanlab/sequence.hpp"

namespace wanlab {

class NoSpectralGap : public std::runtime_error {
 public:
  std::vector<double> offending;
  explicit NoSpectralGap(std::vector<double> evs)
      : std::runtime_error(message(evs)), offending(std::move(evs)) {}

 private:
  static std::string message(const std::vector<double>& evs) {
    std::ostringstream os;
    os << "no spectral gap at 1/2; offending eigenvalues:";
    for (double e : evs) os << ' ' << e;
    return os.str();
  }
};

class NotInvertible : public std::runtime_error {
 public:
  double sigma_min;
  NotInvertible(int R, double smin)
      : std::runtime_error("not invertible at radius " + std::to_string(R) +
                           " (smallest singular value " + std::to_string(smin) + ")"),
        sigma_min(smin) {}
};

class TruncationTooCoarse : public std::runtime_error {
 public:
  double eps;
  explicit TruncationTooCoarse(double e)
      : std::runtime_error("\xCE\xB5 \xE2\x89\xA5 1/12: increase n_trunc (measured " +
                           std::to_string(e) + ")"),
        eps(e) {}
};

// Spectral projection of a self-adjoint q onto eigenvalues > 1/2 of its
// l^2(ball(R)) truncation, pulled back to a kernel via identity-cell
// extraction. Requires an empty window of half-width > 0.05 around 1/2.
inline GammaSequence holomorphic_step(const GammaSequence& q, int R, double* gap_out = nullptr) {
  const auto& G = q.group();
  G->ensure_radius(R);
  const auto ball = G->ball(R);
  const Mat M = dense_action_matrix(q, ball);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.adjoint()));
  const auto& ev = es.eigenvalues();

  std::vector<double> offending;
  double gap = 1e300;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double d = std::abs(ev(i) - 0.5);
    gap = std::min(gap, d);
    if (d <= 0.05) offending.push_back(ev(i));
  }
  if (!offending.empty()) throw NoSpectralGap(std::move(offending));
  if (gap_out) *gap_out = gap;

  Mat P = Mat::Zero(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 0.5) P += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
  return kernel_from_dense(P, ball, G, q.rows(), q.cols(), R);
}

struct PolarReport {
  double sigma_min = 0;
  double scale = 0;
  int iterations = 0;
};

// u = z (z*z)^{-1/2}. The inverse square root runs as Newton-Schulz in the
// sequence algebra itself: with X = z*z / lambda all iterates are polynomials
// in X, so they commute and Y_k -> X^{-1/2}.
inline GammaSequence polar_unitary(const GammaSequence& z, int R, PolarReport* rep = nullptr) {
  if (z.rows() != z.cols()) throw std::invalid_argument("polar_unitary: square blocks required");
  const auto& G = z.group();
  const GammaSequence y = convolve(involution(z), z);

  G->ensure_radius(R);
  const auto ball = G->ball(R);
  {
    const Mat Y = dense_action_matrix(y, ball);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Y + Y.adjoint()), Eigen::EigenvaluesOnly);
    const double smin = std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
    if (rep) rep->sigma_min = smin;
    if (smin <= 1e-6) throw NotInvertible(R, smin);
  }

  const double lambda = operator_norm(y, R) * (1.0 + 1e-12);
  if (rep) rep->scale = lambda;
  const GammaSequence X = (1.0 / lambda) * y;
  const GammaSequence id = GammaSequence::identity(G, z.rows());

  GammaSequence Y = id;
  int iters = 0;
  for (; iters < 100; ++iters) {
    const GammaSequence YX = convolve(Y, X);
    const GammaSequence YY = convolve(Y, Y);
    GammaSequence next = 1.5 * Y - 0.5 * convolve(YX, YY);
    next = next.pruned();
    const double step = (next - Y).l1_norm();
    Y = std::move(next);
    if (step < 1e-13) {
      ++iters;
      break;
    }
  }
  if (rep) rep->iterations = iters;
  return convolve(z, (1.0 / std::sqrt(lambda)) * Y).pruned();
}

struct SmoothingReport {
  double eps = 0;             // ||p - pi_n p pi_n||_op at R
  double qn_defect = 0;       // ||q_n^2 - q_n||_op, proof promises < 3 eps
  double gap = 0;             // spectral half-gap of q_n at 1/2
  double pq_distance = 0;     // ||p - q||_op, proof promises < 1/12 + 1/8
  double unitary_defect = 0;  // l^1 bound on ||u* u - delta_e||
  PolarReport polar;
};

// Lemma-style smoothing: compress p to the first n_trunc block indices,
// repair idempotency holomorphically, then conjugate p onto the result.
inline std::tuple<GammaSequence, GammaSequence, SmoothingReport> projection_smoothing(
    const GammaSequence& p, int n_trunc, int R) {
  if (p.rows() != p.cols()) throw std::invalid_argument("projection_smoothing: square blocks");
  if (n_trunc < 1 || n_trunc > p.rows())
    throw std::invalid_argument("projection_smoothing: n_trunc out of range");
  const auto& G = p.group();
  const int D = p.rows();
  SmoothingReport rep;

  GammaSequence qn(G, D, D);
  for (const auto& [g, blk] : p.entries()) {
    Mat cut = Mat::Zero(D, D);
    cut.topLeftCorner(n_trunc, n_trunc) = blk.topLeftCorner(n_trunc, n_trunc);
    if (cut.norm() > kPruneTol) qn.set(g, std::move(cut));
  }

  rep.eps = operator_norm(p - qn, R);
  if (rep.eps >= 1.0 / 12.0) throw TruncationTooCoarse(rep.eps);
  rep.qn_defect = operator_norm(convolve(qn, qn) - qn, R);

  const GammaSequence q = holomorphic_step(qn, R, &rep.gap);
  rep.pq_distance = operator_norm(p - q, R);

  const GammaSequence id = GammaSequence::identity(G, D);
  const GammaSequence z =
      convolve(2.0 * q - id, 2.0 * p - id) + id;
  const GammaSequence u = polar_unitary(z, R, &rep.polar);
  rep.unitary_defect = (convolve(involution(u), u) - id).l1_norm();
  return {q, u, rep};
}

}  // namespace wanlab
