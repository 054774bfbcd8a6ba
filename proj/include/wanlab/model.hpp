#pragma once

// Crystal model presets, open-boundary truncations, spectra, gap detection,
// and the (magnetic) Bloch symbols used by momentum-space backends.

#include "wanlab/fit.hpp"
#include "wanlab/sequence.hpp"

namespace wanlab {

struct SpectralWindow {
  double lo = 0, hi = 0;
  double margin_lo = 0, margin_hi = 0;  // distance from edges to spectrum outside
  bool valid() const { return lo < hi && margin_lo > 0 && margin_hi > 0; }
  bool contains(double e) const { return e >= lo && e <= hi; }
};

struct CrystalModel {
  GroupRef G;
  int d = 1;  // sites per cell
  GammaSequence H;
  std::string name;
  std::map<std::string, double> params;
  int hop_radius = 0;

  CrystalModel(GroupRef g, int dd, GammaSequence h) : G(std::move(g)), d(dd), H(std::move(h)) {
    hop_radius = H.support_radius();
  }
};

namespace detail {

inline Mat pauli(int i) {
  Mat m(2, 2);
  switch (i) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

// off-identity hop plus its involution mirror; keeps self-adjointness exact
inline void add_hop(GammaSequence& h, const Elem& g, const Mat& blk) {
  h.add(g, blk);
  const auto& G = h.group();
  const Elem gi = G->inverse(g);
  Mat adj = blk.adjoint();
  if (G->twisted) adj *= std::conj(G->cocycle(gi, g));
  h.add(gi, adj);
}

inline double param(const std::map<std::string, double>& p, const std::string& key,
                    double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace detail

inline CrystalModel build_model(const std::string& preset,
                                const std::map<std::string, double>& params = {}) {
  using detail::add_hop;
  using detail::param;
  const Mat sx = detail::pauli(1), sy = detail::pauli(2), sz = detail::pauli(3);

  if (preset == "chain_dimer") {
    const double t1 = param(params, "t1", 1.0), t2 = param(params, "t2", 0.04);
    auto G = GroupDescriptor::zd(1);
    GammaSequence h(G, 2, 2);
    h.add(Elem{0, 0, 0, 0}, t1 * sx);
    Mat inter = Mat::Zero(2, 2);
    inter(1, 0) = t2;
    if (t2 != 0.0) add_hop(h, Elem{1, 0, 0, 0}, inter);
    CrystalModel m(G, 2, h.pruned());
    m.name = preset;
    m.params = {{"t1", t1}, {"t2", t2}};
    return m;
  }

  if (preset == "chern2d") {
    // H(k) = sin k1 sx + sin k2 sy + (m + cos k1 + cos k2) sz
    const double mass = param(params, "m", 4.0);
    auto G = GroupDescriptor::zd(2);
    GammaSequence h(G, 2, 2);
    h.add(Elem{0, 0, 0, 0}, mass * sz);
    add_hop(h, Elem{1, 0, 0, 0}, 0.5 * (cplx(0, -1) * sx + sz));
    add_hop(h, Elem{0, 1, 0, 0}, 0.5 * (cplx(0, -1) * sy + sz));
    CrystalModel m(G, 2, h.pruned());
    m.name = preset;
    m.params = {{"m", mass}};
    return m;
  }

  if (preset == "pg_glide") {
    // two sites per cell swapped by the glide; E hops between neighbouring cells
    const double t1 = param(params, "t1", 1.0);
    const double t2 = param(params, "t2", 0.02);
    const double t3 = param(params, "t3", 0.02);
    auto G = GroupDescriptor::pg();
    Mat E = Mat::Zero(2, 2);
    E(1, 0) = 1.0;
    GammaSequence h(G, 2, 2);
    h.add(Elem{0, 0, 0, 0}, t1 * sx);
    add_hop(h, Elem{1, 0, 0, 0}, t2 * E);
    add_hop(h, Elem{0, 1, 0, 0}, t3 * E);
    CrystalModel m(G, 2, h.pruned());
    m.name = preset;
    m.params = {{"t1", t1}, {"t2", t2}, {"t3", t3}};
    return m;
  }

  if (preset == "dihedral_dimer") {
    const double t1 = param(params, "t1", 1.0), t2 = param(params, "t2", 0.03);
    auto G = GroupDescriptor::inf_dihedral();
    Mat E = Mat::Zero(2, 2);
    E(1, 0) = 1.0;
    GammaSequence h(G, 2, 2);
    h.add(Elem{0, 0, 0, 0}, t1 * sx);
    add_hop(h, Elem{1, 0, 0, 0}, t2 * E);
    CrystalModel m(G, 2, h.pruned());
    m.name = preset;
    m.params = {{"t1", t1}, {"t2", t2}};
    return m;
  }

  if (preset == "dihedral_reflect") {
    // both generators of the hop support are involutions, so real weights
    // a, b give a self-adjoint kernel without mirroring
    const double a = param(params, "a", -1.0), b = param(params, "b", -0.3);
    auto G = GroupDescriptor::inf_dihedral();
    GammaSequence h(G, 1, 1);
    h.add(Elem{0, 1, 0, 0}, Mat::Constant(1, 1, a));
    h.add(Elem{1, 1, 0, 0}, Mat::Constant(1, 1, b));
    CrystalModel m(G, 1, h.pruned());
    m.name = preset;
    m.params = {{"a", a}, {"b", b}};
    return m;
  }

  if (preset == "heis_cayley") {
    const double v = param(params, "v", 1.0), t = param(params, "t", 0.02);
    auto G = GroupDescriptor::heis();
    GammaSequence h(G, 2, 2);
    h.add(Elem{0, 0, 0, 0}, v * sz);
    add_hop(h, Elem{1, 0, 0, 0}, t * sx);
    add_hop(h, Elem{0, 1, 0, 0}, t * sx);
    CrystalModel m(G, 2, h.pruned());
    m.name = preset;
    m.params = {{"v", v}, {"t", t}};
    return m;
  }

  if (preset == "hofstadter") {
    const int p = static_cast<int>(param(params, "p", 1.0));
    const int q = static_cast<int>(param(params, "q", 3.0));
    if (q < 1 || p == 0) throw std::invalid_argument("hofstadter: flux p/q invalid");
    auto G = GroupDescriptor::twisted_z2(static_cast<double>(p) / q);
    GammaSequence h(G, 1, 1);
    add_hop(h, Elem{1, 0, 0, 0}, Mat::Constant(1, 1, 1.0));
    add_hop(h, Elem{0, 1, 0, 0}, Mat::Constant(1, 1, 1.0));
    CrystalModel m(G, 1, h.pruned());
    m.name = preset;
    m.params = {{"p", static_cast<double>(p)}, {"q", static_cast<double>(q)}};
    return m;
  }

  throw std::invalid_argument("build_model: unknown preset '" + preset + "'");
}

// Open-boundary restriction to ball(R), exactly Hermitian.
inline Mat truncate_model(const CrystalModel& m, int R) {
  if (R < m.hop_radius)
    throw std::invalid_argument("truncate_model: R below hopping radius");
  m.G->ensure_radius(R);
  const auto ball = m.G->ball(R);
  const Mat M = Mat(action_matrix(m.H, ball, ball));
  return 0.5 * (M + M.adjoint());
}

inline std::vector<double> spectrum(const Mat& M, Mat* vecs = nullptr) {
  Eigen::SelfAdjointEigenSolver<Mat> es(M, vecs ? Eigen::ComputeEigenvectors
                                                : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectrum: eigensolver failed");
  if (vecs) *vecs = es.eigenvectors();
  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + M.rows());
  return out;
}

// Maximal gaps of width >= min_width split the eigenvalues into clusters;
// each cluster becomes a tightly padded window. Empty when gapless.
inline std::vector<SpectralWindow> detect_gaps(const std::vector<double>& eigs,
                                               double min_width) {
  std::vector<SpectralWindow> out;
  if (eigs.empty()) return out;
  std::vector<std::size_t> cuts;  // gap after index i
  for (std::size_t i = 0; i + 1 < eigs.size(); ++i)
    if (eigs[i + 1] - eigs[i] >= min_width) cuts.push_back(i);
  if (cuts.empty()) return out;

  const double kInf = 1e99;
  std::size_t start = 0;
  for (std::size_t c = 0; c <= cuts.size(); ++c) {
    const std::size_t stop = (c < cuts.size()) ? cuts[c] : eigs.size() - 1;
    const double gap_below = (start == 0) ? kInf : eigs[start] - eigs[start - 1];
    const double gap_above = (stop + 1 == eigs.size()) ? kInf : eigs[stop + 1] - eigs[stop];
    SpectralWindow w;
    const double pad_lo = 0.01 * std::min(1.0, gap_below);
    const double pad_hi = 0.01 * std::min(1.0, gap_above);
    w.lo = eigs[start] - pad_lo;
    w.hi = eigs[stop] + pad_hi;
    w.margin_lo = (start == 0) ? kInf : eigs[start - 1] < w.lo ? w.lo - eigs[start - 1] : 0.0;
    w.margin_hi = (stop + 1 == eigs.size()) ? kInf : eigs[stop + 1] - w.hi;
    out.push_back(w);
    start = stop + 1;
  }
  return out;
}

// Bloch symbol for untwisted Zd: H(k) = sum_gamma H_gamma e^{i k . gamma}
inline Mat bloch_symbol(const GammaSequence& a, const std::vector<double>& k) {
  const auto& G = a.group();
  if (G->family != Family::Zd || G->twisted)
    throw std::invalid_argument("bloch_symbol: untwisted Zd only");
  Mat out = Mat::Zero(a.rows(), a.cols());
  for (const auto& [g, blk] : a.entries()) {
    double ph = 0;
    for (int i = 0; i < G->rank_d; ++i) ph += k[static_cast<size_t>(i)] * g[i];
    out += blk * cplx(std::cos(ph), std::sin(ph));
  }
  return out;
}

// Magnetic Bloch symbol for theta = p/q on Z^2, magnetic cell 1 x q along the
// second axis. Blocks of size (q d) x (q d); satisfies
// symbol(a * b) = symbol(a) symbol(b) for the Landau cocycle
// sigma(g, h) = exp(2 pi i theta g_2 h_1).
inline Mat magnetic_symbol(const GammaSequence& a, double k1, double k2, int q) {
  const auto& G = a.group();
  if (G->family != Family::TwistedZ2)
    throw std::invalid_argument("magnetic_symbol: TwistedZ2 only");
  const double theta = G->theta;
  const int d = a.rows();
  if (a.cols() != d) throw std::invalid_argument("magnetic_symbol: square blocks");
  Mat out = Mat::Zero(q * d, q * d);
  for (const auto& [g, blk] : a.entries()) {
    for (int b = 0; b < q; ++b) {
      const int lift = b + g[1];
      const int cell = static_cast<int>(std::floor(static_cast<double>(lift) / q));
      const int bp = lift - q * cell;
      const double ph = 2.0 * M_PI * theta * b * g[0] + k1 * g[0] + k2 * cell;
      out.block(b * d, bp * d, d, d) += blk * cplx(std::cos(ph), std::sin(ph));
    }
  }
  return out;
}

// Right projective translation on ball(R): (rho_g xi)_mu = conj(sigma(mu, g)) xi_{mu g}.
// The conjugate cocycle makes rho commute with every left convolution in the
// infinite volume; used to witness Gamma-invariance of truncations.
inline SpMat right_translation(const GroupRef& G, const std::vector<Elem>& ball, const Elem& g) {
  detail::ElemIndex idx(ball);
  SpMat M(static_cast<Eigen::Index>(ball.size()), static_cast<Eigen::Index>(ball.size()));
  std::vector<Eigen::Triplet<cplx>> trip;
  for (std::size_t i = 0; i < ball.size(); ++i) {
    const Elem mu = ball[i];
    const int j = idx.find(G->multiply(mu, g));
    if (j < 0) continue;
    const cplx ph = G->twisted ? std::conj(G->cocycle(mu, g)) : cplx(1.0, 0.0);
    trip.emplace_back(static_cast<int>(i), j, ph);
  }
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace wanlab
