#pragma once

// Gap spectral projections p = chi_S(H) extracted as GammaSequence kernels,
// with verified idempotency/self-adjointness and a rapid-decay fit. Several
// interchangeable backends produce the kernel; the defect gate that accepts
// or rejects the truncation radius is shared by all of them.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wanlab/fit.hpp"
#include "wanlab/model.hpp"
#include "wanlab/parallel.hpp"

namespace wanlab {

class WindowNotGapped : public std::runtime_error {
 public:
  std::vector<double> offending;

  explicit WindowNotGapped(std::vector<double> evs)
      : std::runtime_error(message(evs)), offending(std::move(evs)) {}

 private:
  static std::string message(const std::vector<double>& evs) {
    std::string s = "window not gapped on truncation";
    const std::size_t n = std::min<std::size_t>(evs.size(), 6);
    for (std::size_t i = 0; i < n; ++i)
      s += (i ? ", " : ": eigenvalues ") + std::to_string(evs[i]);
    if (evs.size() > n) s += ", ...";
    return s;
  }
};

class IdempotencyExceeded : public std::runtime_error {
 public:
  double defect;
  int radius;

  IdempotencyExceeded(double d, int R)
      : std::runtime_error("idempotency tolerance exceeded \xE2\x80\x94 increase R (defect " +
                           std::to_string(d) + " at R=" + std::to_string(R) + ")"),
        defect(d),
        radius(R) {}
};

enum class ProjectionBackend { automatic, obc, bloch, magbloch, chebyshev };

struct ProjectionOptions {
  ProjectionBackend backend = ProjectionBackend::automatic;
  int buffer = -1;  // < 0: ceil(R/2) on ball truncations, 0 on exact symbol grids
  double idempotency_tol = 1e-8;
  double gap_guard = 1e-3;
  int bloch_grid = 96;
  int magbloch_grid = 192;
  int torus_n = 150;
  double cheb_eps = 1e-11;
  int max_rational_q = 16;
  std::size_t dense_limit = 6000;
};

struct SpectralProjection {
  GammaSequence kernel;
  SpectralWindow window;
  int R = 0;
  int keep_radius = 0;
  std::string backend;
  DecayFit fit;
  double idempotency_defect = 0.0;
  double selfadjoint_defect = 0.0;
  double trace_per_cell = 0.0;

  SpectralProjection() : kernel(nullptr, 1, 1) {}
};

namespace detail {

inline bool rational_flux(double theta, int max_q, int* p_out, int* q_out) {
  for (int q = 1; q <= max_q; ++q) {
    const double pq = theta * q;
    const double r = std::round(pq);
    if (std::abs(pq - r) < 1e-12) {
      *p_out = static_cast<int>(r);
      *q_out = q;
      return true;
    }
  }
  return false;
}

inline void scan_window_guard(const std::vector<double>& eigs, const SpectralWindow& w,
                              double guard, std::vector<double>& bad) {
  for (double e : eigs)
    if (std::abs(e - w.lo) < guard || std::abs(e - w.hi) < guard) bad.push_back(e);
}

// Exact self-adjoint symmetrization. Untwisted kernels are rebuilt so that
// involution(p) == p holds bitwise (adjoint round-trips exactly in fp);
// twisted cocycle phases round |sigma|^2 away from 1, so those kernels are
// averaged with their involution instead, leaving an O(ulp) defect.
inline void symmetrize_selfadjoint(GammaSequence& p) {
  const auto& G = p.group();
  if (G->twisted) {
    const GammaSequence q = involution(p);
    GammaSequence out(G, p.rows(), p.cols());
    for (const auto& [g, blk] : p.entries()) out.set(g, 0.5 * (blk + q.at(g)));
    for (const auto& [g, blk] : q.entries())
      if (p.entries().find(g) == p.entries().end()) out.set(g, 0.5 * blk);
    p = std::move(out);
    return;
  }
  std::vector<Elem> keys;
  keys.reserve(p.entries().size());
  for (const auto& [g, blk] : p.entries()) keys.push_back(g);
  for (const auto& g : keys) {
    const Elem gi = G->inverse(g);
    if (gi == g) {
      const Mat blk = p.at(g);
      p.set(g, 0.5 * (blk + blk.adjoint()));
    } else if (std::lexicographical_compare(g.begin(), g.end(), gi.begin(), gi.end())) {
      const Mat avg = 0.5 * (p.at(g) + p.at(gi).adjoint());
      p.set(g, avg);
      p.set(gi, avg.adjoint());
    }
  }
}

// kernel blocks from the identity-cell column of a truncated projector:
// p_gamma = C[gamma-cell rows], C = P * (identity-cell selector)
inline GammaSequence kernel_from_columns(const Mat& C, const std::vector<Elem>& ball,
                                         const GroupRef& G, int d, int keep_radius) {
  G->ensure_radius(keep_radius);
  GammaSequence out(G, d, d);
  ElemIndex idx(ball);
  for (const auto& g : G->ball(keep_radius)) {
    const int i = idx.find(g);
    if (i < 0) continue;
    Mat blk = C.block(static_cast<Eigen::Index>(i) * d, 0, d, d);
    if (blk.norm() > kPruneTol) out.set(g, std::move(blk));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detected windows hug the samples they were built from, and eigenvalues of
// a finer grid or a larger truncation creep past them toward the true band
// edges. The margins certify the adjacent space holds no other spectrum, so
// eigenvalue selection widens each edge to the midgap (capped at 1), the same
// convention window_filter uses for its transition centers.
inline SpectralWindow effective_window(const SpectralWindow& w) {
  SpectralWindow out = w;
  out.lo -= 0.5 * std::min(w.margin_lo, 1.0);
  out.hi += 0.5 * std::min(w.margin_hi, 1.0);
  out.margin_lo = 0.5 * std::min(w.margin_lo, 1.0);
  out.margin_hi = 0.5 * std::min(w.margin_hi, 1.0);
  return out;
}

// dense open-boundary eigensolve

inline GammaSequence obc_kernel(const CrystalModel& m, const SpectralWindow& w, int R, int K,
                                double guard) {
  const Mat T = truncate_model(m, R);
  Mat V;
  const auto eigs = spectrum(T, &V);
  std::vector<double> bad;
  scan_window_guard(eigs, w, guard, bad);
  if (!bad.empty()) throw WindowNotGapped(std::move(bad));

  const auto ball = m.G->ball(R);
  ElemIndex idx(ball);
  const int ie = idx.find(Elem{0, 0, 0, 0});
  std::vector<Eigen::Index> in;
  for (std::size_t i = 0; i < eigs.size(); ++i)
    if (w.contains(eigs[i])) in.push_back(static_cast<Eigen::Index>(i));
  Mat C = Mat::Zero(T.rows(), m.d);
  for (const Eigen::Index j : in) {
    const Vec v = V.col(j);
    C.noalias() += v * v.segment(static_cast<Eigen::Index>(ie) * m.d, m.d).adjoint();
  }
  return kernel_from_columns(C, ball, m.G, m.d, K);
}

// ---------------------------------------------------------------------------
// Bloch functional calculus on a momentum grid (untwisted Zd; exact kernels
// up to grid aliasing ~ e^{-alpha(N-K)}, so no boundary buffer is needed)

inline GammaSequence bloch_kernel(const CrystalModel& m, const SpectralWindow& w, int K, int N,
                                  double guard) {
  const auto& G = m.G;
  const int dd = G->rank_d;
  const int d = m.d;
  std::size_t nk = 1;
  for (int i = 0; i < dd; ++i) nk *= static_cast<std::size_t>(N);

  std::vector<Mat> Pk(nk);
  std::vector<std::vector<double>> bad(nk);
  parallel_for(nk, [&](std::size_t b, std::size_t e) {
    std::vector<double> k(static_cast<std::size_t>(dd));
    for (std::size_t j = b; j < e; ++j) {
      std::size_t t = j;
      for (int i = 0; i < dd; ++i) {
        k[static_cast<std::size_t>(i)] = 2.0 * M_PI * static_cast<double>(t % N) / N;
        t /= static_cast<std::size_t>(N);
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(bloch_symbol(m.H, k));
      scan_window_guard({es.eigenvalues().data(), es.eigenvalues().data() + d}, w, guard, bad[j]);
      Mat P = Mat::Zero(d, d);
      for (int i = 0; i < d; ++i)
        if (w.contains(es.eigenvalues()(i)))
          P.noalias() += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
      Pk[j] = std::move(P);
    }
  });
  std::vector<double> all_bad;
  for (const auto& v : bad) all_bad.insert(all_bad.end(), v.begin(), v.end());
  if (!all_bad.empty()) throw WindowNotGapped(std::move(all_bad));

  // e^{2 pi i m / N} table; the grid phase k.gamma reduces mod N exactly
  std::vector<cplx> W(static_cast<std::size_t>(N));
  for (int mth = 0; mth < N; ++mth)
    W[static_cast<std::size_t>(mth)] =
        std::polar(1.0, 2.0 * M_PI * static_cast<double>(mth) / N);

  G->ensure_radius(K);
  const auto ball = G->ball(K);
  std::vector<Mat> blocks(ball.size());
  parallel_for(ball.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t gi = b; gi < e; ++gi) {
      const Elem& g = ball[gi];
      Mat acc = Mat::Zero(d, d);
      for (std::size_t j = 0; j < nk; ++j) {
        std::size_t t = j;
        long long dot = 0;
        for (int i = 0; i < dd; ++i) {
          dot += static_cast<long long>(t % static_cast<std::size_t>(N)) * g[i];
          t /= static_cast<std::size_t>(N);
        }
        const long long idx = ((-dot) % N + N) % N;
        acc.noalias() += Pk[j] * W[static_cast<std::size_t>(idx)];
      }
      blocks[gi] = acc / static_cast<double>(nk);
    }
  });
  GammaSequence out(G, d, d);
  for (std::size_t gi = 0; gi < ball.size(); ++gi)
    if (blocks[gi].norm() > kPruneTol) out.set(ball[gi], std::move(blocks[gi]));
  return out;
}

// ---------------------------------------------------------------------------
// magnetic Bloch functional calculus (TwistedZ2, rational flux p/q)

inline GammaSequence magbloch_kernel(const CrystalModel& m, const SpectralWindow& w, int K,
                                     int N, int q, double guard) {
  const auto& G = m.G;
  const int d = m.d;
  const std::size_t nk = static_cast<std::size_t>(N) * static_cast<std::size_t>(N);

  std::vector<Mat> Pk(nk);
  std::vector<std::vector<double>> bad(nk);
  parallel_for(nk, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      const double k1 = 2.0 * M_PI * static_cast<double>(j % static_cast<std::size_t>(N)) / N;
      const double k2 = 2.0 * M_PI * static_cast<double>(j / static_cast<std::size_t>(N)) / N;
      Eigen::SelfAdjointEigenSolver<Mat> es(magnetic_symbol(m.H, k1, k2, q));
      const int nb = q * d;
      scan_window_guard({es.eigenvalues().data(), es.eigenvalues().data() + nb}, w, guard,
                        bad[j]);
      Mat P = Mat::Zero(nb, nb);
      for (int i = 0; i < nb; ++i)
        if (w.contains(es.eigenvalues()(i)))
          P.noalias() += es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
      Pk[j] = std::move(P);
    }
  });
  std::vector<double> all_bad;
  for (const auto& v : bad) all_bad.insert(all_bad.end(), v.begin(), v.end());
  if (!all_bad.empty()) throw WindowNotGapped(std::move(all_bad));

  std::vector<cplx> W(static_cast<std::size_t>(N));
  for (int mth = 0; mth < N; ++mth)
    W[static_cast<std::size_t>(mth)] =
        std::polar(1.0, 2.0 * M_PI * static_cast<double>(mth) / N);

  G->ensure_radius(K);
  const auto ball = G->ball(K);
  std::vector<Mat> blocks(ball.size());
  parallel_for(ball.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t gi = b; gi < e; ++gi) {
      const Elem& g = ball[gi];
      const int n2 = static_cast<int>(std::floor(static_cast<double>(g[1]) / q));
      const int bsite = g[1] - q * n2;
      Mat acc = Mat::Zero(d, d);
      for (std::size_t j = 0; j < nk; ++j) {
        const long long j1 = static_cast<long long>(j % static_cast<std::size_t>(N));
        const long long j2 = static_cast<long long>(j / static_cast<std::size_t>(N));
        const long long dot = j1 * g[0] + j2 * n2;
        const long long idx = ((-dot) % N + N) % N;
        acc.noalias() += Pk[j].block(0, bsite * d, d, d) * W[static_cast<std::size_t>(idx)];
      }
      blocks[gi] = acc / static_cast<double>(nk);
    }
  });
  GammaSequence out(G, d, d);
  for (std::size_t gi = 0; gi < ball.size(); ++gi)
    if (blocks[gi].norm() > kPruneTol) out.set(ball[gi], std::move(blocks[gi]));
  return out;
}

// ---------------------------------------------------------------------------
// Chebyshev filter backends: erf-smoothed window indicator applied by
// three-term recurrence to identity-cell delta columns

struct ChebFilter {
  double center = 0, half = 1;
  std::vector<double> coef;
};

inline ChebFilter build_cheb_filter(double A, double B, double lo, double hi, double width,
                                    double eps) {
  ChebFilter f;
  f.center = 0.5 * (A + B);
  f.half = 0.5 * (B - A);
  int M = static_cast<int>(std::ceil((B - A) * std::log(1.0 / eps) / (2.0 * width)));
  M = std::clamp(M, 8, 4000);
  const int nq = 4 * (M + 1);
  f.coef.assign(static_cast<std::size_t>(M + 1), 0.0);
  for (int n = 0; n < nq; ++n) {
    const double th = M_PI * (n + 0.5) / nq;
    const double x = f.center + f.half * std::cos(th);
    const double val = 0.5 * (std::erf((x - lo) / width) - std::erf((x - hi) / width));
    for (int j = 0; j <= M; ++j)
      f.coef[static_cast<std::size_t>(j)] += val * std::cos(j * th);
  }
  for (int j = 0; j <= M; ++j)
    f.coef[static_cast<std::size_t>(j)] *= (j == 0 ? 1.0 : 2.0) / nq;
  return f;
}

inline Mat apply_cheb(const SpMat& T, const ChebFilter& f, const Mat& V0) {
  const SpMat That = [&] {
    SpMat I(T.rows(), T.cols());
    I.setIdentity();
    return SpMat(((T - f.center * I) / f.half).pruned());
  }();
  Mat t0 = V0;
  Mat t1 = That * V0;
  Mat acc = f.coef[0] * t0 + f.coef[1] * t1;
  for (std::size_t j = 2; j < f.coef.size(); ++j) {
    Mat t2 = 2.0 * (That * t1) - t0;
    acc.noalias() += f.coef[j] * t2;
    t0 = std::move(t1);
    t1 = std::move(t2);
  }
  return acc;
}

// Window boundaries hug the enclosed band (detect_gaps pads them by a hair),
// so a transition centered exactly at w.lo / w.hi would sag on the band edge.
// Push each transition to the middle of the adjacent gap (capped at 1) and
// size the width so both the band and its neighbors sit >= 5 sigma away:
// erf(5) leaves ~1.5e-12, matching the default coefficient tolerance.
inline ChebFilter window_filter(const SpectralWindow& w, double hull, double eps) {
  const double glo = std::min(w.margin_lo, 1.0);
  const double ghi = std::min(w.margin_hi, 1.0);
  const double width = std::min(glo, ghi) / 10.0;
  return build_cheb_filter(-hull, hull, w.lo - glo / 2, w.hi + ghi / 2, width, eps);
}

inline GammaSequence cheb_obc_kernel(const CrystalModel& m, const SpectralWindow& w, int R,
                                     int K, double eps) {
  const auto& G = m.G;
  G->ensure_radius(R);
  const auto ball = G->ball(R);
  SpMat T = action_matrix(m.H, ball, ball);
  T = SpMat(0.5 * (T + SpMat(T.adjoint())));
  const double h = m.H.l1_norm();
  const auto f = window_filter(w, h, eps);

  ElemIndex idx(ball);
  const int ie = idx.find(Elem{0, 0, 0, 0});
  Mat V0 = Mat::Zero(T.rows(), m.d);
  for (int s = 0; s < m.d; ++s) V0(static_cast<Eigen::Index>(ie) * m.d + s, s) = 1.0;
  return kernel_from_columns(apply_cheb(T, f, V0), ball, G, m.d, K);
}

// Periodic torus with Landau gauge phases exp(2 pi i theta g2 x) on the hop
// from column site (x, y) by g; exactly flux-uniform (wraparound included)
// when q divides N.
inline GammaSequence cheb_torus_kernel(const CrystalModel& m, const SpectralWindow& w, int K,
                                       int N, double eps) {
  const auto& G = m.G;
  const double theta = G->theta;
  const int d = m.d;
  const auto site = [N, d](int x, int y, int s) {
    return (static_cast<Eigen::Index>(x) * N + y) * d + s;
  };
  SpMat T(static_cast<Eigen::Index>(N) * N * d, static_cast<Eigen::Index>(N) * N * d);
  {
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(m.H.support_size() * static_cast<std::size_t>(N) * N * d);
    for (const auto& [g, blk] : m.H.entries())
      for (int x = 0; x < N; ++x)
        for (int y = 0; y < N; ++y) {
          const int xr = ((x + g[0]) % N + N) % N;
          const int yr = ((y + g[1]) % N + N) % N;
          const cplx ph = std::polar(1.0, 2.0 * M_PI * theta * g[1] * x);
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
              const cplx v = ph * blk(i, j);
              if (v != cplx(0.0, 0.0)) trip.emplace_back(site(xr, yr, i), site(x, y, j), v);
            }
        }
    T.setFromTriplets(trip.begin(), trip.end());
  }
  T = SpMat(0.5 * (T + SpMat(T.adjoint())));
  const double h = m.H.l1_norm();
  const auto f = window_filter(w, h, eps);

  Mat V0 = Mat::Zero(T.rows(), d);
  for (int s = 0; s < d; ++s) V0(site(0, 0, s), s) = 1.0;
  const Mat C = apply_cheb(T, f, V0);

  G->ensure_radius(K);
  GammaSequence out(G, d, d);
  for (const auto& g : G->ball(K)) {
    const int x = (g[0] % N + N) % N;
    const int y = (g[1] % N + N) % N;
    Mat blk = C.block(site(x, y, 0), 0, d, d);
    if (blk.norm() > kPruneTol) out.set(g, std::move(blk));
  }
  return out;
}

// ---------------------------------------------------------------------------
// grid estimators for ||a||_op, used to refine the l1 gate bound

inline double grid_hermitian_norm(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double bloch_grid_norm(const GammaSequence& a, int N) {
  const int dd = a.group()->rank_d;
  const int d = a.rows();
  std::vector<std::pair<Elem, Mat>> ent(a.entries().begin(), a.entries().end());
  std::size_t nk = 1;
  for (int i = 0; i < dd; ++i) nk *= static_cast<std::size_t>(N);
  std::vector<cplx> W(static_cast<std::size_t>(N));
  for (int mth = 0; mth < N; ++mth)
    W[static_cast<std::size_t>(mth)] =
        std::polar(1.0, 2.0 * M_PI * static_cast<double>(mth) / N);

  const unsigned workers = worker_count();
  std::vector<double> best(workers, 0.0);
  const std::size_t chunk = (nk + workers - 1) / workers;
  parallel_for(nk, [&](std::size_t b, std::size_t e) {
    const std::size_t slot = b / std::max<std::size_t>(chunk, 1);
    double mx = 0.0;
    Mat A(d, d);
    for (std::size_t j = b; j < e; ++j) {
      A.setZero();
      for (const auto& [g, blk] : ent) {
        std::size_t t = j;
        long long dot = 0;
        for (int i = 0; i < dd; ++i) {
          dot += static_cast<long long>(t % static_cast<std::size_t>(N)) * g[i];
          t /= static_cast<std::size_t>(N);
        }
        A.noalias() += blk * W[static_cast<std::size_t>((dot % N + N) % N)];
      }
      mx = std::max(mx, grid_hermitian_norm(A));
    }
    best[std::min<std::size_t>(slot, workers - 1)] =
        std::max(best[std::min<std::size_t>(slot, workers - 1)], mx);
  });
  return *std::max_element(best.begin(), best.end());
}

inline double magnetic_grid_norm(const GammaSequence& a, int N, int q) {
  const auto& G = a.group();
  const double theta = G->theta;
  const int d = a.rows();
  // expanded terms: (row b, col b', g1, cell) with the k-independent phase folded in
  struct Term {
    int rb, cb, g1, cell;
    Mat val;
  };
  std::vector<Term> terms;
  for (const auto& [g, blk] : a.entries())
    for (int b = 0; b < q; ++b) {
      const int lift = b + g[1];
      const int cell = static_cast<int>(std::floor(static_cast<double>(lift) / q));
      const int bp = lift - q * cell;
      const cplx ph = std::polar(1.0, 2.0 * M_PI * theta * b * g[0]);
      terms.push_back({b, bp, g[0], cell, Mat(blk * ph)});
    }

  const std::size_t nk = static_cast<std::size_t>(N) * static_cast<std::size_t>(N);
  std::vector<cplx> W(static_cast<std::size_t>(N));
  for (int mth = 0; mth < N; ++mth)
    W[static_cast<std::size_t>(mth)] =
        std::polar(1.0, 2.0 * M_PI * static_cast<double>(mth) / N);

  const unsigned workers = worker_count();
  std::vector<double> best(workers, 0.0);
  const std::size_t chunk = (nk + workers - 1) / workers;
  parallel_for(nk, [&](std::size_t b, std::size_t e) {
    const std::size_t slot = std::min<std::size_t>(b / std::max<std::size_t>(chunk, 1), workers - 1);
    double mx = 0.0;
    Mat A(q * d, q * d);
    for (std::size_t j = b; j < e; ++j) {
      const long long j1 = static_cast<long long>(j % static_cast<std::size_t>(N));
      const long long j2 = static_cast<long long>(j / static_cast<std::size_t>(N));
      A.setZero();
      for (const auto& t : terms) {
        const long long dot = j1 * t.g1 + j2 * t.cell;
        A.block(t.rb * d, t.cb * d, d, d).noalias() +=
            t.val * W[static_cast<std::size_t>((dot % N + N) % N)];
      }
      mx = std::max(mx, grid_hermitian_norm(A));
    }
    best[slot] = std::max(best[slot], mx);
  });
  return *std::max_element(best.begin(), best.end());
}

}  // namespace detail

inline const char* backend_name(ProjectionBackend b) {
  switch (b) {
    case ProjectionBackend::automatic: return "auto";
    case ProjectionBackend::obc: return "obc";
    case ProjectionBackend::bloch: return "bloch";
    case ProjectionBackend::magbloch: return "magbloch";
    case ProjectionBackend::chebyshev: return "chebyshev";
  }
  return "?";
}

inline SpectralProjection spectral_projection(const CrystalModel& m, const SpectralWindow& window,
                                              int R, const ProjectionOptions& opts = {}) {
  const auto& G = m.G;
  if (!(window.lo < window.hi))
    throw std::invalid_argument("spectral_projection: window is empty");

  int p_flux = 0, q_flux = 1;
  const bool rational =
      G->twisted && detail::rational_flux(G->theta, opts.max_rational_q, &p_flux, &q_flux);

  ProjectionBackend be = opts.backend;
  if (be == ProjectionBackend::automatic) {
    if (!G->twisted && G->family == Family::Zd) {
      be = ProjectionBackend::bloch;
    } else if (G->twisted) {
      be = rational ? ProjectionBackend::magbloch : ProjectionBackend::chebyshev;
    } else {
      G->ensure_radius(R);
      be = (G->ball_size(R) * static_cast<std::size_t>(m.d) <= opts.dense_limit)
               ? ProjectionBackend::obc
               : ProjectionBackend::chebyshev;
    }
  }
  if (be == ProjectionBackend::bloch && (G->twisted || G->family != Family::Zd))
    throw std::invalid_argument("spectral_projection: bloch backend needs untwisted Zd");
  if (be == ProjectionBackend::magbloch && !(G->twisted && rational))
    throw std::invalid_argument("spectral_projection: magbloch backend needs rational flux");

  const bool ball_backend =
      be == ProjectionBackend::obc || (be == ProjectionBackend::chebyshev && !G->twisted);
  const int buffer = opts.buffer >= 0 ? opts.buffer : (ball_backend ? (R + 1) / 2 : 0);
  if (R < 2 * m.hop_radius + buffer)
    throw std::invalid_argument("spectral_projection: R below 2*hop_radius + buffer");
  const int K = R - buffer;
  if (K < 0) throw std::invalid_argument("spectral_projection: negative keep radius");

  const bool cheb = be == ProjectionBackend::chebyshev;
  if (cheb && !(window.margin_lo > opts.gap_guard && window.margin_hi > opts.gap_guard))
    throw std::invalid_argument(
        "spectral_projection: chebyshev backend needs window margins above the gap guard");

  SpectralProjection proj;
  proj.window = window;
  proj.R = R;
  proj.keep_radius = K;
  const SpectralWindow wsel = detail::effective_window(window);
  switch (be) {
    case ProjectionBackend::obc:
      proj.kernel = detail::obc_kernel(m, wsel, R, K, opts.gap_guard);
      proj.backend = "obc";
      break;
    case ProjectionBackend::bloch:
      proj.kernel = detail::bloch_kernel(m, wsel, K, opts.bloch_grid, opts.gap_guard);
      proj.backend = "bloch";
      break;
    case ProjectionBackend::magbloch:
      proj.kernel =
          detail::magbloch_kernel(m, wsel, K, opts.magbloch_grid, q_flux, opts.gap_guard);
      proj.backend = "magbloch";
      break;
    case ProjectionBackend::chebyshev:
      if (G->twisted) {
        const int N = ((opts.torus_n + q_flux - 1) / std::max(q_flux, 1)) * std::max(q_flux, 1);
        proj.kernel = detail::cheb_torus_kernel(m, window, K, N, opts.cheb_eps);
        proj.backend = "chebyshev-torus";
      } else {
        proj.kernel = detail::cheb_obc_kernel(m, window, R, K, opts.cheb_eps);
        proj.backend = "chebyshev-obc";
      }
      break;
    case ProjectionBackend::automatic:
      break;  // unreachable
  }

  detail::symmetrize_selfadjoint(proj.kernel);
  proj.kernel = proj.kernel.pruned();
  proj.selfadjoint_defect = (involution(proj.kernel) - proj.kernel).l1_norm();
  proj.trace_per_cell = proj.kernel.at(Elem{0, 0, 0, 0}).real().trace();

  GammaSequence diff = convolve(proj.kernel, proj.kernel) - proj.kernel;
  diff = diff.pruned();
  double defect = diff.l1_norm();
  if (defect > opts.idempotency_tol && !diff.entries().empty()) {
    const int supp = diff.support_radius();
    if (!G->twisted && G->family == Family::Zd) {
      defect = detail::bloch_grid_norm(diff, std::max(256, 2 * supp + 32));
    } else if (G->twisted && rational) {
      defect = detail::magnetic_grid_norm(diff, std::max(256, 2 * supp + 32), q_flux);
    } else {
      defect = operator_norm(diff, supp + 8);
    }
  }
  proj.idempotency_defect = defect;
  if (defect > opts.idempotency_tol) throw IdempotencyExceeded(defect, R);

  proj.fit = fit_decay(proj.kernel);
  return proj;
}

// dual decay fit of the accepted kernel (the discrete admissibility report)
inline DecayFit admissibility_check(const SpectralProjection& proj) {
  return fit_decay(proj.kernel);
}

// Gap windows from the spectrum a projection backend would see. Open-boundary
// truncations of topologically nontrivial models fill the bulk gap with edge
// modes, so abelian families sample the (magnetic) Bloch spectrum instead.
inline std::vector<SpectralWindow> model_windows(const CrystalModel& m, double min_width,
                                                 int grid = 32, int obc_R = 6) {
  const auto& G = m.G;
  std::vector<double> eigs;
  int p_flux = 0, q_flux = 1;
  if (!G->twisted && G->family == Family::Zd) {
    const int dd = G->rank_d;
    std::size_t nk = 1;
    for (int i = 0; i < dd; ++i) nk *= static_cast<std::size_t>(grid);
    std::vector<double> k(static_cast<std::size_t>(dd));
    for (std::size_t j = 0; j < nk; ++j) {
      std::size_t t = j;
      for (int i = 0; i < dd; ++i) {
        k[static_cast<std::size_t>(i)] = 2.0 * M_PI * static_cast<double>(t % static_cast<std::size_t>(grid)) / grid;
        t /= static_cast<std::size_t>(grid);
      }
      for (double e : spectrum(bloch_symbol(m.H, k))) eigs.push_back(e);
    }
  } else if (G->twisted && detail::rational_flux(G->theta, 64, &p_flux, &q_flux)) {
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j)
        for (double e :
             spectrum(magnetic_symbol(m.H, 2.0 * M_PI * i / grid, 2.0 * M_PI * j / grid, q_flux)))
          eigs.push_back(e);
  } else {
    eigs = spectrum(truncate_model(m, obc_R));
  }
  std::sort(eigs.begin(), eigs.end());
  return detect_gaps(eigs, min_width);
}

}  // namespace wanlab
