#pragma once

// Wannier bases and tight frames from spectral projections: the trial Gram,
// its inverse square root in the sequence algebra, Parseval checks, and the
// reflection-module decomposition demo on the infinite dihedral group.

#include <random>

#include "wanlab/wavefunction.hpp"

namespace wanlab {

class GramNotInvertible : public std::runtime_error {
 public:
  double floor;
  int radius;

  GramNotInvertible(double f, int R)
      : std::runtime_error("Gram not invertible \xE2\x80\x94 trials do not witness freeness "
                           "(spectral floor " +
                           std::to_string(f) + " at R=" + std::to_string(R) + ")"),
        floor(f),
        radius(R) {}
};

struct WannierOptions {
  double gram_floor = 1e-5;  // freeness witness threshold for the truncated Gram
  int gram_radius = -1;      // < 0: the projection's working radius
  int diag_radius = -1;      // < 0: the projection's working radius
  int ns_max_iters = 60;
  double ns_tol = 1e-11;
  double ns_prune = 1e-12;
};

struct WannierSet {
  std::vector<LatticeWavefunction> w;
  std::string kind;  // "orthonormal-basis" | "tight-frame"
  double orthonormality_err = std::numeric_limits<double>::quiet_NaN();
  double frame_deviation = std::numeric_limits<double>::quiet_NaN();
  double range_residual = 0.0;  // max_j |p w_j - w_j| / |w_j|
  double gram_floor = std::numeric_limits<double>::quiet_NaN();
  double gram_cond = std::numeric_limits<double>::quiet_NaN();
  double ns_residual = 0.0;  // final |Z * Y - 1| of the inverse-sqrt iteration
  double redundancy = std::numeric_limits<double>::quiet_NaN();
  std::vector<DecayFit> fits;
  int R = 0;  // diagnostic radius the errors were measured at
};

// Cell-site deltas ordered by descending diagonal weight of the kernel at the
// identity: the sites most present in the band make the best-behaved trials.
inline std::vector<LatticeWavefunction> default_trials(const SpectralProjection& p, int n) {
  const auto& G = p.kernel.group();
  const int d = p.kernel.rows();
  if (n < 1 || n > d) throw std::invalid_argument("default_trials: need 1 <= n <= sites per cell");
  const Mat pe = p.kernel.at(Elem{0, 0, 0, 0});
  std::vector<int> sites(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) sites[static_cast<std::size_t>(j)] = j;
  std::stable_sort(sites.begin(), sites.end(),
                   [&](int a, int b) { return pe(a, a).real() > pe(b, b).real(); });
  std::vector<LatticeWavefunction> out;
  for (int i = 0; i < n; ++i) {
    LatticeWavefunction t(G, d);
    Mat v = Mat::Zero(d, 1);
    v(sites[static_cast<std::size_t>(i)], 0) = 1.0;
    t.set(Elem{0, 0, 0, 0}, std::move(v));
    out.push_back(std::move(t));
  }
  return out;
}

namespace detail {

// pairing(v, w) through the transform; the equality with the verbatim sum is
// a pinned identity, and this route costs |supp v| |supp w| instead of
// |candidates| |supp|.
inline GammaSequence fast_pairing(const LatticeWavefunction& v, const LatticeWavefunction& w) {
  return module_inner_product(bloch_floquet(v), bloch_floquet(w));
}

}  // namespace detail

// Gram of the projected trials in the sequence algebra:
// G_{ij, gamma} = pairing(p g_i, p g_j)_gamma, symmetrized so that
// involution(G) == G holds exactly.
inline GammaSequence trial_gram(const SpectralProjection& p,
                                const std::vector<LatticeWavefunction>& trials) {
  if (trials.empty()) throw std::invalid_argument("trial_gram: no trials");
  const auto& G = p.kernel.group();
  const int n = static_cast<int>(trials.size());
  std::vector<LatticeWavefunction> v;
  v.reserve(trials.size());
  for (const auto& t : trials) {
    if (t.support_size() == 0) throw std::invalid_argument("trial_gram: zero trial");
    v.push_back(apply_kernel(p.kernel, t));
  }
  std::map<Elem, Mat> blocks;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto pij =
          detail::fast_pairing(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
      for (const auto& [g, blk] : pij.entries()) {
        auto it = blocks.try_emplace(g, Mat::Zero(n, n)).first;
        it->second(i, j) = blk(0, 0);
      }
    }
  GammaSequence gram(G, n, n);
  for (auto& [g, blk] : blocks) gram.set(g, std::move(blk));
  gram += involution(gram);
  gram *= 0.5;
  return gram.pruned();
}

struct GramSpectrum {
  double floor = 0.0;
  double top = 0.0;
};

// Extreme eigenvalues of the Gram of the translate family over ball(R): the
// dense truncation whose positivity floor witnesses freeness of the module
// generated by the trials.
inline GramSpectrum gram_spectrum(const GammaSequence& gram, int R) {
  const auto& G = gram.group();
  G->ensure_radius(R + gram.support_radius());
  const auto ball = G->ball(R);
  Mat M = Mat(action_matrix(gram, ball, ball));
  M = 0.5 * (M + M.adjoint()).eval();
  const auto eigs = spectrum(M);
  return GramSpectrum{eigs.front(), eigs.back()};
}

namespace detail {

inline GammaSequence block_column(const GammaSequence& a, int j) {
  GammaSequence out(a.group(), a.rows(), 1);
  for (const auto& [g, blk] : a.entries()) out.set(g, blk.col(j));
  return out.pruned();
}

// Coupled Newton-Schulz for the inverse square root in the sequence algebra.
// The l1 norm dominates the operator norm, so X = G / l1(G) has spectrum in
// (0, 1] whenever the Gram floor is positive, which is exactly the iteration's
// convergence region. Returns Z -> X^{-1/2} and the final residual |Z Y - 1|.
inline std::pair<GammaSequence, double> newton_schulz_isqrt(const GammaSequence& X,
                                                            const WannierOptions& o) {
  const auto& G = X.group();
  const int n = X.rows();
  const GammaSequence I = GammaSequence::identity(G, n);
  GammaSequence Y = X;
  GammaSequence Z = I;
  double err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < o.ns_max_iters; ++it) {
    const GammaSequence ZY = convolve(Z, Y);
    err = (ZY - I).l1_norm();
    if (err < o.ns_tol) break;
    GammaSequence T = 3.0 * I - ZY;
    T *= 0.5;
    Y = convolve(Y, T).pruned(o.ns_prune);
    Z = convolve(T, Z).pruned(o.ns_prune);
  }
  return {std::move(Z), err};
}

}  // namespace detail

// Max over i, j and gamma in ball(R) of |<gamma* w_i, w_j> - delta_ij
// delta_{gamma,e}|, the deviation of the translate family from orthonormality.
inline double orthonormality_error(const WannierSet& ws, int R) {
  if (ws.w.empty()) return 0.0;
  const auto& G = ws.w.front().group();
  G->ensure_radius(R);
  double err = 0.0;
  const Elem e{0, 0, 0, 0};
  for (std::size_t i = 0; i < ws.w.size(); ++i)
    for (std::size_t j = 0; j < ws.w.size(); ++j) {
      const auto p = detail::fast_pairing(ws.w[i], ws.w[j]);
      const cplx target = (i == j) ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
      err = std::max(err, std::abs(p.at(e)(0, 0) - target));
      std::vector<Elem> supp;
      for (const auto& [g, blk] : p.entries()) supp.push_back(g);
      G->ensure_contains(supp);
      for (const auto& [g, blk] : p.entries())
        if (!(g == e) && G->word_length(g) <= R) err = std::max(err, std::abs(blk(0, 0)));
    }
  return err;
}

struct FrameCheckReport {
  double max_deviation = 0.0;
  std::vector<double> deviations;  // per sample: |sum |<h, gamma* f_j>|^2 - 1|
  int samples = 0;
  int R = 0;
};

// Parseval test on random range vectors h = p (random) / norm: the translates
// over ball(R) of the frame members must resolve |h|^2.
inline FrameCheckReport frame_check(const WannierSet& ws, const SpectralProjection& proj,
                                    int samples, int R, std::uint64_t seed = 7) {
  FrameCheckReport rep;
  rep.samples = samples;
  rep.R = R;
  const auto& G = proj.kernel.group();
  const int d = proj.kernel.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  G->ensure_radius(2);
  const auto cells = G->ball(2);
  for (int s = 0; s < samples; ++s) {
    LatticeWavefunction raw(G, d);
    for (const auto& g : cells) {
      Mat v(d, 1);
      for (int a = 0; a < d; ++a) v(a, 0) = cplx(nd(rng), nd(rng));
      raw.set(g, std::move(v));
    }
    LatticeWavefunction h = apply_kernel(proj.kernel, raw);
    const double nrm = h.l2_norm();
    if (nrm < 1e-12) continue;
    h *= cplx(1.0 / nrm, 0.0);
    double sum = 0.0;
    for (const auto& f : ws.w) {
      const auto p = detail::fast_pairing(f, h);
      std::vector<Elem> supp;
      for (const auto& [g, blk] : p.entries()) supp.push_back(g);
      G->ensure_contains(supp);
      for (const auto& [g, blk] : p.entries())
        if (G->word_length(g) <= R) sum += std::norm(blk(0, 0));
    }
    rep.deviations.push_back(std::abs(sum - 1.0));
    rep.max_deviation = std::max(rep.max_deviation, rep.deviations.back());
  }
  return rep;
}

// Orthonormal Wannier basis from trial orbitals: w_j = sum_i p g_i * S_ij with
// S the inverse square root of the trial Gram, computed by Newton-Schulz in
// the sequence algebra. An invertible truncated Gram is the numerical witness
// of freeness; failure throws rather than returning a degraded basis.
inline WannierSet wannierize(const SpectralProjection& proj,
                             const std::vector<LatticeWavefunction>& trials,
                             const WannierOptions& opts = {}) {
  const auto& G = proj.kernel.group();
  const int d = proj.kernel.rows();
  const int n = static_cast<int>(trials.size());
  const int Rg = opts.gram_radius > 0 ? opts.gram_radius : proj.R;
  const int Rd = opts.diag_radius > 0 ? opts.diag_radius : proj.R;

  const GammaSequence gram = trial_gram(proj, trials);
  const auto gs = gram_spectrum(gram, Rg);
  if (!(gs.floor > opts.gram_floor)) throw GramNotInvertible(gs.floor, Rg);

  const double c = gram.l1_norm();
  GammaSequence X = gram;
  X *= 1.0 / c;
  auto [Z, ns_err] = detail::newton_schulz_isqrt(X, opts);
  Z *= 1.0 / std::sqrt(c);  // Z is now gram^{-1/2}

  GammaSequence V(G, d, n);
  {
    std::map<Elem, Mat> blocks;
    for (int i = 0; i < n; ++i) {
      const auto vi = bloch_floquet(apply_kernel(proj.kernel, trials[static_cast<std::size_t>(i)]));
      for (const auto& [g, blk] : vi.entries()) {
        auto it = blocks.try_emplace(g, Mat::Zero(d, n)).first;
        it->second.col(i) = blk.col(0);
      }
    }
    for (auto& [g, blk] : blocks) V.set(g, std::move(blk));
  }
  const GammaSequence W = convolve(V, Z).pruned();

  WannierSet ws;
  ws.kind = "orthonormal-basis";
  ws.R = Rd;
  ws.gram_floor = gs.floor;
  ws.gram_cond = gs.top / gs.floor;
  ws.ns_residual = ns_err;
  for (int j = 0; j < n; ++j) {
    auto wj = inverse_bloch_floquet(detail::block_column(W, j));
    ws.fits.push_back(fit_decay(wj.as_sequence()));
    ws.w.push_back(std::move(wj));
  }
  for (const auto& wj : ws.w) {
    const auto pw = apply_kernel(proj.kernel, wj);
    ws.range_residual =
        std::max(ws.range_residual, (pw - wj).as_sequence().frobenius() / wj.l2_norm());
  }
  ws.orthonormality_err = orthonormality_error(ws, Rd);
  return ws;
}

// Parseval frame from the projection of the standard cell basis: f_j = p
// delta_{e, site j}, j = 1..d, i.e. the kernel columns read back through the
// transform. Always available; redundancy d / rank is the price of skipping
// the freeness question.
inline WannierSet tight_frame(const SpectralProjection& proj, int samples = 4,
                              const WannierOptions& opts = {}) {
  const int d = proj.kernel.rows();
  const int Rd = opts.diag_radius > 0 ? opts.diag_radius : proj.R;
  WannierSet ws;
  ws.kind = "tight-frame";
  ws.R = Rd;
  for (int j = 0; j < d; ++j) {
    auto fj = inverse_bloch_floquet(detail::block_column(proj.kernel, j));
    ws.fits.push_back(fit_decay(fj.as_sequence()));
    ws.w.push_back(std::move(fj));
  }
  for (const auto& fj : ws.w) {
    if (fj.support_size() == 0) continue;
    const auto pf = apply_kernel(proj.kernel, fj);
    ws.range_residual =
        std::max(ws.range_residual, (pf - fj).as_sequence().frobenius() / fj.l2_norm());
  }
  if (proj.trace_per_cell > 0) ws.redundancy = d / proj.trace_per_cell;
  ws.frame_deviation = frame_check(ws, proj, samples, Rd).max_deviation;
  return ws;
}

// Reflection-module decomposition on the infinite dihedral group: from a free
// rank-1 Wannier generator w, the even/odd combinations w_pm = (w +- tau
// w)/sqrt(2) generate the two symmetry submodules. Their Z-translates are
// orthonormal bases of the respective subspaces; the duplicated family {w_pm /
// sqrt(2), tau(w_pm) / sqrt(2)} is the tight frame with repeated elements.
struct ReflectionModuleReport {
  WannierSet base;            // the rank-1 orthonormal set {w}
  double sym_plus_error = 0;  // |tau(w+) - w+|
  double sym_minus_error = 0; // |tau(w-) + w-|
  double overlap_plus = 0;    // |<tau(w+), w+>|, nonzero by construction
  double z_ortho_plus = 0;    // Z-translate orthonormality error of w+
  double z_ortho_minus = 0;
  double frame_dev_plus = 0;  // duplicated frame Parseval defect on the even subspace
  double frame_dev_full = 0;  // {w+, w-} Z-translate Parseval defect on the range
  double duplicate_ortho_error = 0;  // ~1: repeated elements are not a basis
  double m_pm_sym_error = 0;  // |(t r)* v - v| for the shifted-centre generator
  double m_pm_z_ortho = 0;    // Z-translate orthonormality error of v
};

namespace detail {

// max_n | pairing(a, b)_{t^n} - delta_{n0} target | over the Z subgroup
inline double z_translate_gram_error(const LatticeWavefunction& a, const LatticeWavefunction& b,
                                     bool expect_identity) {
  const auto p = fast_pairing(a, b);
  double err = 0.0;
  for (const auto& [g, blk] : p.entries()) {
    if (g[1] != 0) continue;  // reflection component: not part of the Z family
    const cplx target = (expect_identity && g[0] == 0) ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
    err = std::max(err, std::abs(blk(0, 0) - target));
  }
  if (expect_identity && p.entries().find(Elem{0, 0, 0, 0}) == p.entries().end())
    err = std::max(err, 1.0);
  return err;
}

// |sum_n sum_f |<h, t^n * f>|^2 - |h|^2| with the sum over the Z subgroup only
inline double z_parseval_defect(const std::vector<LatticeWavefunction>& fs,
                                const LatticeWavefunction& h) {
  double sum = 0.0;
  for (const auto& f : fs) {
    const auto p = fast_pairing(f, h);
    for (const auto& [g, blk] : p.entries())
      if (g[1] == 0) sum += std::norm(blk(0, 0));
  }
  const double n2 = h.l2_norm() * h.l2_norm();
  return std::abs(sum - n2);
}

}  // namespace detail

inline ReflectionModuleReport reflection_module_demo(const CrystalModel& m,
                                                     const SpectralWindow& window, int R,
                                                     const WannierOptions& opts = {}) {
  if (m.G->family != Family::InfDihedral)
    throw std::invalid_argument("reflection_module_demo: InfDihedral model required");
  const auto proj = spectral_projection(m, window, R);
  const int rank = static_cast<int>(std::lround(proj.trace_per_cell));
  if (rank != 1)
    throw std::invalid_argument("reflection_module_demo: rank-1 reflection-symmetric gap needed");

  ReflectionModuleReport rep;
  rep.base = wannierize(proj, default_trials(proj, 1), opts);
  const auto& w = rep.base.w.front();
  const auto& G = m.G;

  const Elem r{0, 1, 0, 0};
  const Elem tr = G->multiply(Elem{1, 0, 0, 0}, r);
  const cplx inv_sqrt2(1.0 / std::sqrt(2.0), 0.0);

  auto wp = w + translate(w, r);
  wp *= inv_sqrt2;
  auto wm = w - translate(w, r);
  wm *= inv_sqrt2;

  rep.sym_plus_error = (translate(wp, r) - wp).as_sequence().frobenius();
  rep.sym_minus_error = (translate(wm, r) + wm).as_sequence().frobenius();
  rep.overlap_plus = std::abs(l2_inner(translate(wp, r), wp));
  rep.z_ortho_plus = detail::z_translate_gram_error(wp, wp, true);
  rep.z_ortho_minus = detail::z_translate_gram_error(wm, wm, true);

  // deterministic test vectors: short combinations of Z-translates
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto combo = [&](const std::vector<LatticeWavefunction>& gens) {
    LatticeWavefunction h(G, m.d);
    for (const auto& g0 : gens)
      for (int nshift = -2; nshift <= 2; ++nshift)
        h += cplx(nd(rng), nd(rng)) * translate(g0, Elem{nshift, 0, 0, 0});
    h *= cplx(1.0 / h.l2_norm(), 0.0);
    return h;
  };
  auto hp = combo({wp});
  auto hf = combo({w});
  const std::vector<LatticeWavefunction> dup = {inv_sqrt2 * wp, inv_sqrt2 * translate(wp, r)};
  rep.frame_dev_plus = detail::z_parseval_defect(dup, hp);
  rep.frame_dev_full = detail::z_parseval_defect({wp, wm}, hf);

  // repeated elements break orthonormality even though the frame is tight
  WannierSet dupset;
  dupset.kind = "tight-frame";
  auto wpn = wp;
  wpn *= cplx(1.0 / wp.l2_norm(), 0.0);
  dupset.w = {wpn, translate(wpn, r)};
  rep.duplicate_ortho_error = orthonormality_error(dupset, 4);

  // shifted-centre generator of M_pm: symmetric about the bond, not the site
  auto v = w + translate(w, tr);
  v *= inv_sqrt2;
  rep.m_pm_sym_error = (translate(v, tr) - v).as_sequence().frobenius();
  rep.m_pm_z_ortho = detail::z_translate_gram_error(v, v, true);
  return rep;
}

}  // namespace wanlab
