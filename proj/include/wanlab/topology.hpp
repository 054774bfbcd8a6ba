#pragma once

// K-theoretic freeness obstructions per group family: Chern numbers in
// momentum and real space, reflection fixed-point parities, traces per cell,
// and the verdict table mapping invariants to predicted Wannier outcomes.

#include <string>
#include <vector>

#include "wanlab/projection.hpp"

namespace wanlab {

// Uniform grid of Bloch fiber projectors over the (magnetic) Brillouin torus.
struct ProjectorGrid {
  int n1 = 0, n2 = 0;  // divisions along k1, k2; n2 == 1 for chains
  int fiber = 0;
  int occ = 0;         // occupied rank, constant across the grid
  std::vector<Mat> P;  // row-major, P[i * n2 + j] at k = 2 pi (i/n1, j/n2)
};

namespace detail {

inline Mat occupied_columns(const Mat& H, const SpectralWindow& w, int* occ_out,
                            const std::string& who, const std::string& where) {
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const int n = static_cast<int>(H.rows());
  Mat V(n, n);
  int occ = 0;
  for (int a = 0; a < n; ++a) {
    const double e = es.eigenvalues()(a);
    if (std::min(std::abs(e - w.lo), std::abs(e - w.hi)) < 1e-9)
      throw std::runtime_error(who + ": gap closes at " + where);
    if (w.contains(e)) V.col(occ++) = es.eigenvectors().col(a);
  }
  *occ_out = occ;
  return V.leftCols(occ);
}

}  // namespace detail

// Fiber projectors P(k) of the Bloch symbol H(k) over the window, on a
// uniform k grid. Chains get an n x 1 grid.
inline ProjectorGrid bloch_projector(const CrystalModel& m, const SpectralWindow& window,
                                     int grid) {
  const auto& G = m.G;
  if (G->family != Family::Zd || G->twisted)
    throw std::invalid_argument("bloch_projector: untwisted Zd model required");
  if (G->rank_d > 2) throw std::invalid_argument("bloch_projector: rank d <= 2 only");
  if (grid < 3) throw std::invalid_argument("bloch_projector: grid too small");
  const SpectralWindow w = detail::effective_window(window);
  ProjectorGrid out;
  out.n1 = grid;
  out.n2 = G->rank_d >= 2 ? grid : 1;
  out.fiber = m.d;
  out.P.reserve(static_cast<std::size_t>(out.n1) * static_cast<std::size_t>(out.n2));
  for (int i = 0; i < out.n1; ++i)
    for (int j = 0; j < out.n2; ++j) {
      std::vector<double> k = {2.0 * M_PI * i / out.n1};
      if (G->rank_d >= 2) k.push_back(2.0 * M_PI * j / out.n2);
      const std::string where =
          "k = 2 pi (" + std::to_string(i) + "/" + std::to_string(out.n1) + ", " +
          std::to_string(j) + "/" + std::to_string(out.n2) + ")";
      int occ = 0;
      const Mat V =
          detail::occupied_columns(bloch_symbol(m.H, k), w, &occ, "bloch_projector", where);
      if (out.P.empty())
        out.occ = occ;
      else if (occ != out.occ)
        throw std::runtime_error("bloch_projector: gap closes at " + where);
      out.P.push_back(V * V.adjoint());
    }
  return out;
}

// Magnetic analogue for rational flux theta = p/q: fiber projectors of the
// (q d) x (q d) magnetic Bloch symbol over the magnetic Brillouin torus.
inline ProjectorGrid magnetic_projector(const CrystalModel& m, const SpectralWindow& window,
                                        int grid) {
  const auto& G = m.G;
  if (G->family != Family::TwistedZ2)
    throw std::invalid_argument("magnetic_projector: TwistedZ2 model required");
  int p = 0, q = 1;
  if (!detail::rational_flux(G->theta, 64, &p, &q))
    throw std::invalid_argument("magnetic_projector: rational flux required");
  if (grid < 3) throw std::invalid_argument("magnetic_projector: grid too small");
  const SpectralWindow w = detail::effective_window(window);
  ProjectorGrid out;
  out.n1 = grid;
  out.n2 = grid;
  out.fiber = q * m.d;
  out.P.reserve(static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid));
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const std::string where = "k = 2 pi (" + std::to_string(i) + "/" + std::to_string(grid) +
                                ", " + std::to_string(j) + "/" + std::to_string(grid) + ")";
      int occ = 0;
      const Mat V = detail::occupied_columns(
          magnetic_symbol(m.H, 2.0 * M_PI * i / grid, 2.0 * M_PI * j / grid, q), w, &occ,
          "magnetic_projector", where);
      if (out.P.empty())
        out.occ = occ;
      else if (occ != out.occ)
        throw std::runtime_error("magnetic_projector: gap closes at " + where);
      out.P.push_back(V * V.adjoint());
    }
  return out;
}

namespace detail {

inline std::vector<Mat> occupied_frames(const ProjectorGrid& g) {
  std::vector<Mat> frames;
  frames.reserve(g.P.size());
  for (const auto& P : g.P) {
    Eigen::SelfAdjointEigenSolver<Mat> es(P);
    Mat V(g.fiber, g.occ);
    int c = 0;
    for (int a = 0; a < g.fiber; ++a)
      if (es.eigenvalues()(a) > 0.5) {
        if (c == g.occ) throw std::runtime_error("occupied_frames: rank mismatch");
        V.col(c++) = es.eigenvectors().col(a);
      }
    if (c != g.occ) throw std::runtime_error("occupied_frames: rank mismatch");
    frames.push_back(std::move(V));
  }
  return frames;
}

}  // namespace detail

// Per-plaquette Berry fluxes from occupied frames: arg of the oriented product
// of link-overlap determinants. Gauge invariant entry by entry.
struct BerryField {
  int n1 = 0, n2 = 0;
  std::vector<double> flux;  // row-major per plaquette, each in (-pi, pi]
};

inline BerryField berry_field(const std::vector<Mat>& frames, int n1, int n2) {
  if (n1 < 3 || n2 < 3)
    throw std::invalid_argument("berry_field: 2D grid of at least 3 x 3 required");
  if (frames.size() != static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2))
    throw std::invalid_argument("berry_field: frame count does not match the grid");
  auto at = [&](int i, int j) -> const Mat& {
    return frames[static_cast<std::size_t>(((i % n1) + n1) % n1) * static_cast<std::size_t>(n2) +
                  static_cast<std::size_t>(((j % n2) + n2) % n2)];
  };
  auto link = [&](int i, int j, int di, int dj) {
    const cplx u = (at(i, j).adjoint() * at(i + di, j + dj)).determinant();
    if (std::abs(u) < 1e-12)
      throw std::runtime_error("chern_number_momentum: singular link overlap; refine the k grid");
    return u;
  };
  BerryField f;
  f.n1 = n1;
  f.n2 = n2;
  f.flux.reserve(static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2));
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const cplx w = link(i, j, 1, 0) * link(i + 1, j, 0, 1) * std::conj(link(i, j + 1, 1, 0)) *
                     std::conj(link(i, j, 0, 1));
      f.flux.push_back(std::arg(w));
    }
  return f;
}

inline BerryField berry_field(const ProjectorGrid& g) {
  return berry_field(detail::occupied_frames(g), g.n1, g.n2);
}

// Total flux / 2 pi. Integral by construction: the link phases cancel in
// pairs, so the sum counts the 2 pi branch crossings exactly.
inline int chern_number_momentum(const std::vector<Mat>& frames, int n1, int n2) {
  const auto f = berry_field(frames, n1, n2);
  double s = 0.0;
  for (double x : f.flux) s += x;
  const double c = s / (2.0 * M_PI);
  const long r = std::lround(c);
  if (std::abs(c - static_cast<double>(r)) > 1e-6)
    throw std::runtime_error("chern_number_momentum: total flux is not an integer multiple");
  return static_cast<int>(r);
}

inline int chern_number_momentum(const ProjectorGrid& g) {
  return chern_number_momentum(detail::occupied_frames(g), g.n1, g.n2);
}

// Trace of the identity-cell block, the canonical per-cell trace.
inline double trace_per_cell(const SpectralProjection& proj) {
  auto it = proj.kernel.entries().find(Elem{0, 0, 0, 0});
  if (it == proj.kernel.entries().end()) return 0.0;
  return it->second.trace().real();
}

// Real-space Chern marker C = Re[2 pi i tr_cell(p [[X1, p], [X2, p]])],
// expanded over kernel entries: matrix elements of p in the physical
// representation are A[mu, nu] = sigma(mu^{-1} nu, nu^{-1}) p_{mu^{-1} nu},
// and the commutators contribute the antisymmetric cell-coordinate weight.
struct RealSpaceChern {
  double value = 0.0;
  double deviation = 0.0;  // |value - nearest integer|
  bool reliable = false;   // kernel decay admissible and deviation small
};

inline RealSpaceChern chern_number_real_space(const SpectralProjection& proj, int R) {
  const auto& G = proj.kernel.group();
  const bool flat = G->family == Family::Zd && G->rank_d == 2 && !G->twisted;
  if (!flat && G->family != Family::TwistedZ2)
    throw std::invalid_argument("chern_number_real_space: 2D lattice required");
  const auto& ent = proj.kernel.entries();
  cplx acc = 0.0;
  for (const auto& [rho, prho] : ent) {
    if (std::abs(rho[0]) + std::abs(rho[1]) > R) continue;
    for (const auto& [step, pstep] : ent) {
      const Elem tau = G->multiply(rho, step);
      if (std::abs(tau[0]) + std::abs(tau[1]) > R) continue;
      const double wgt =
          static_cast<double>(rho[0]) * tau[1] - static_cast<double>(rho[1]) * tau[0];
      if (wgt == 0.0) continue;
      auto it = ent.find(G->inverse(tau));
      if (it == ent.end()) continue;
      cplx ph(1.0, 0.0);
      if (G->twisted)
        ph = G->cocycle(rho, G->inverse(rho)) * G->cocycle(step, G->inverse(tau));
      acc += ph * (prho * pstep * it->second).trace() * wgt;
    }
  }
  RealSpaceChern out;
  out.value = -2.0 * M_PI * acc.imag();  // Re(2 pi i acc)
  out.deviation = std::abs(out.value - static_cast<double>(std::lround(out.value)));
  out.reliable = proj.fit.admissible && out.deviation <= 0.05;
  return out;
}

// Fixed-point parities of the reflection on the Z-Bloch problem: the index-2
// translation subgroup gives a doubled cell, the flip fixes k = 0 and k = pi,
// and the reflection acts there as the sublattice swap. m_k counts occupied
// odd-parity (sign representation) states.
struct Z2FixedPoint {
  int rank = 0;  // occupied count of the doubled Bloch problem
  int m0 = 0;
  int mpi = 0;
};

inline Z2FixedPoint z2_fixed_point_invariants(const CrystalModel& m,
                                              const SpectralWindow& window) {
  const auto& G = m.G;
  if (G->family != Family::InfDihedral)
    throw std::invalid_argument("z2_fixed_point_invariants: InfDihedral model required");
  const int d = m.d;
  const SpectralWindow w = detail::effective_window(window);
  Z2FixedPoint out;
  int n_prev = -1;
  for (int half : {0, 1}) {
    const double k = half ? M_PI : 0.0;
    // H_Z(k)[(r, i), (s, j)] = sum_D H_{((-1)^r D, r xor s)}_{ij} e^{i k D}
    Mat H = Mat::Zero(2 * d, 2 * d);
    for (const auto& [g, blk] : m.H.entries())
      for (int r = 0; r < 2; ++r) {
        const int s = r ^ (g[1] & 1);
        const double ph = k * static_cast<double>(r == 0 ? g[0] : -g[0]);
        H.block(r * d, s * d, d, d) += blk * cplx(std::cos(ph), std::sin(ph));
      }
    H = 0.5 * (H + H.adjoint()).eval();
    int occ = 0;
    const Mat V = detail::occupied_columns(H, w, &occ, "z2_fixed_point_invariants",
                                           std::string("k = ") + (half ? "pi" : "0"));
    if (n_prev >= 0 && occ != n_prev)
      throw std::runtime_error(
          "z2_fixed_point_invariants: occupied rank differs between fixed momenta");
    n_prev = occ;
    out.rank = occ;
    Mat Rop = Mat::Zero(2 * d, 2 * d);
    Rop.block(0, d, d, d) = Mat::Identity(d, d);
    Rop.block(d, 0, d, d) = Mat::Identity(d, d);
    const double modd = (occ - (V.adjoint() * Rop * V).trace().real()) / 2.0;
    const long rounded = std::lround(modd);
    if (std::abs(modd - static_cast<double>(rounded)) > 0.05)
      throw std::runtime_error("z2_fixed_point_invariants: parity count not quantized");
    (half ? out.mpi : out.m0) = static_cast<int>(rounded);
  }
  return out;
}

// Structured invariant vector per family plus the verdict it implies.
struct KClass {
  Family family = Family::Zd;
  int rank = 0;
  std::vector<int> chern;   // Zd: one entry per coordinate 2-plane, empty for chains
  double trace = 0.0;
  int m0 = 0, mpi = 0;      // InfDihedral fixed-point parities
  double real_space = 0.0;  // TwistedZ2 marker value
  int real_space_chern = 0;
  bool marker_reliable = true;
  std::string verdict;    // free | stably-free-hence-free | non-free | undetermined
  std::string predicted;  // Wannier outcome the verdict implies
};

// Decision table. Zd is complete for d <= 2; for d >= 3 vanishing first Chern
// numbers leave higher obstructions uncomputed. The free class over the
// infinite dihedral group is g copies of the regular representation, which
// pins (rank, m0, mpi) = (2g, g, g). Integer trace over the Heisenberg group
// gives a stably free class, and stably free is free there.
inline void k_verdict(KClass& k) {
  const auto free_with = [&k](const std::string& verdict, int n) {
    k.verdict = verdict;
    k.predicted = "good Wannier basis exists (n = " + std::to_string(n) + ")";
  };
  const auto non_free = [&k] {
    k.verdict = "non-free";
    k.predicted = "no good Wannier basis; tight frame only";
  };
  const auto undetermined = [&k] {
    k.verdict = "undetermined";
    k.predicted = "no prediction; higher obstructions not computed";
  };
  const bool integer_trace = std::abs(k.trace - std::lround(k.trace)) < 1e-6;
  switch (k.family) {
    case Family::Zd: {
      bool all_zero = true;
      for (int c : k.chern) all_zero = all_zero && c == 0;
      if (!all_zero)
        non_free();
      else if (k.chern.size() <= 1)
        free_with("free", k.rank);
      else
        undetermined();
      break;
    }
    case Family::Pg:
      free_with("free", k.rank);
      break;
    case Family::InfDihedral:
      if (k.rank % 2 == 0 && k.m0 == k.mpi && 2 * k.m0 == k.rank)
        free_with("free", k.rank / 2);
      else
        non_free();
      break;
    case Family::TwistedZ2:
      if (!integer_trace)
        non_free();
      else if (!k.marker_reliable)
        undetermined();
      else if (k.real_space_chern == 0)
        free_with("free", static_cast<int>(std::lround(k.trace)));
      else
        non_free();
      break;
    case Family::HeisZ:
      if (integer_trace)
        free_with("stably-free-hence-free", static_cast<int>(std::lround(k.trace)));
      else
        non_free();
      break;
  }
}

// Assemble the family's invariant vector from the model, window, and kernel.
// marker_R < 0 uses the kernel radius plus a margin for the real-space sum.
inline KClass compute_kclass(const CrystalModel& m, const SpectralWindow& window,
                             const SpectralProjection& proj, int grid = 32, int marker_R = -1) {
  const auto& G = m.G;
  KClass k;
  k.family = G->family;
  k.trace = trace_per_cell(proj);
  switch (G->family) {
    case Family::Zd: {
      const auto pg = bloch_projector(m, window, grid);
      k.rank = pg.occ;
      if (G->rank_d == 2) k.chern.push_back(chern_number_momentum(pg));
      break;
    }
    case Family::Pg:
      k.rank = static_cast<int>(std::lround(k.trace));
      break;
    case Family::InfDihedral: {
      const auto fp = z2_fixed_point_invariants(m, window);
      k.rank = fp.rank;
      k.m0 = fp.m0;
      k.mpi = fp.mpi;
      break;
    }
    case Family::TwistedZ2: {
      const auto rs = chern_number_real_space(proj, marker_R > 0 ? marker_R : proj.R + 4);
      k.rank = std::max(1, static_cast<int>(std::lround(k.trace)));
      k.real_space = rs.value;
      k.real_space_chern = static_cast<int>(std::lround(rs.value));
      k.marker_reliable = rs.reliable;
      break;
    }
    case Family::HeisZ:
      k.rank = static_cast<int>(std::lround(k.trace));
      break;
  }
  k_verdict(k);
  return k;
}

}  // namespace wanlab
