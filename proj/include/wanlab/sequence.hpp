#pragma once

// Finitely supported block-valued sequences over a group: the arena where
// twisted convolution, the *-involution, Sobolev norms and truncated
// operator norms live.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <complex>
#include <iostream>
#include <map>
#include <stdexcept>
#include <vector>

#include "wanlab/group.hpp"

namespace wanlab {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline constexpr double kPruneTol = 1e-14;

inline bool same_group(const GroupRef& A, const GroupRef& B) {
  return A->family == B->family && A->arity == B->arity && A->rank_d == B->rank_d &&
         A->theta == B->theta;
}

// Immutable by convention: operations below are pure functions returning
// fresh sequences. Ordered map keeps every reduction order deterministic.
class GammaSequence {
 public:
  GammaSequence(GroupRef G, int rows, int cols) : G_(std::move(G)), rows_(rows), cols_(cols) {
    if (rows_ < 1 || cols_ < 1) throw std::invalid_argument("GammaSequence: block shape");
  }

  static GammaSequence delta(GroupRef G, const Elem& g, Mat blk) {
    GammaSequence s(std::move(G), static_cast<int>(blk.rows()), static_cast<int>(blk.cols()));
    s.set(g, std::move(blk));
    return s;
  }

  static GammaSequence scalar_delta(const GroupRef& G, const Elem& g, cplx v = 1.0) {
    return delta(G, g, Mat::Constant(1, 1, v));
  }

  static GammaSequence identity(const GroupRef& G, int n) {
    return delta(G, Elem{0, 0, 0, 0}, Mat::Identity(n, n));
  }

  const GroupRef& group() const { return G_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool twisted() const { return G_->twisted; }
  const std::map<Elem, Mat>& entries() const { return data_; }
  std::size_t support_size() const { return data_.size(); }

  Mat at(const Elem& g) const {
    auto it = data_.find(g);
    return it == data_.end() ? Mat::Zero(rows_, cols_) : it->second;
  }

  void set(const Elem& g, Mat blk) {
    check_block(blk);
    data_[g] = std::move(blk);
  }

  void add(const Elem& g, const Mat& blk) {
    check_block(blk);
    auto it = data_.find(g);
    if (it == data_.end())
      data_.emplace(g, blk);
    else
      it->second += blk;
  }

  GammaSequence pruned(double tol = kPruneTol) const {
    GammaSequence r(G_, rows_, cols_);
    for (const auto& [g, blk] : data_)
      if (blk.norm() > tol) r.data_.emplace(g, blk);
    return r;
  }

  // rigorous C* upper bound: sum of block spectral norms
  double l1_norm() const {
    double s = 0;
    for (const auto& [g, blk] : data_)
      s += blk.jacobiSvd().singularValues()(0);
    return s;
  }

  double frobenius() const {
    double s = 0;
    for (const auto& [g, blk] : data_) s += blk.squaredNorm();
    return std::sqrt(s);
  }

  int support_radius() const {
    if (data_.empty()) return 0;
    std::vector<Elem> supp;
    supp.reserve(data_.size());
    for (const auto& [g, blk] : data_) supp.push_back(g);
    G_->ensure_contains(supp);
    int r = 0;
    for (const auto& g : supp) r = std::max(r, G_->word_length(g));
    return r;
  }

  GammaSequence& operator+=(const GammaSequence& o) {
    require_same_shape(o);
    for (const auto& [g, blk] : o.data_) add(g, blk);
    return *this;
  }
  GammaSequence& operator-=(const GammaSequence& o) {
    require_same_shape(o);
    for (const auto& [g, blk] : o.data_) add(g, -blk);
    return *this;
  }
  GammaSequence& operator*=(cplx c) {
    for (auto& [g, blk] : data_) blk *= c;
    return *this;
  }

  friend GammaSequence operator+(GammaSequence a, const GammaSequence& b) { return a += b; }
  friend GammaSequence operator-(GammaSequence a, const GammaSequence& b) { return a -= b; }
  friend GammaSequence operator*(cplx c, GammaSequence a) { return a *= c; }

  void require_same_shape(const GammaSequence& o) const {
    if (!same_group(G_, o.G_) || rows_ != o.rows_ || cols_ != o.cols_)
      throw std::invalid_argument("GammaSequence: group/shape mismatch");
  }

 private:
  void check_block(const Mat& blk) const {
    if (blk.rows() != rows_ || blk.cols() != cols_)
      throw std::invalid_argument("GammaSequence: block shape mismatch");
  }

  GroupRef G_;
  int rows_, cols_;
  std::map<Elem, Mat> data_;
};

struct SobolevProfile {
  std::vector<std::pair<double, double>> points;  // (s, norm), norms non-decreasing in s
};

// (a*b)_gamma = sum_rho sigma(rho, rho^{-1} gamma) a_rho b_{rho^{-1} gamma}
inline GammaSequence convolve(const GammaSequence& a, const GammaSequence& b) {
  if (!same_group(a.group(), b.group()))
    throw std::invalid_argument("convolve: group mismatch");
  if (a.cols() != b.rows()) throw std::invalid_argument("convolve: block shape mismatch");
  const auto& G = a.group();
  GammaSequence r(G, a.rows(), b.cols());
  for (const auto& [rho, ablk] : a.entries()) {
    for (const auto& [tau, bblk] : b.entries()) {
      const Elem g = G->multiply(rho, tau);
      Mat prod = ablk * bblk;
      if (G->twisted) prod *= G->cocycle(rho, tau);
      r.add(g, prod);
    }
  }
  return r.pruned();
}

// (a^*)_gamma = conj(sigma(gamma, gamma^{-1})) a_{gamma^{-1}}^dagger
inline GammaSequence involution(const GammaSequence& a) {
  const auto& G = a.group();
  GammaSequence r(G, a.cols(), a.rows());
  for (const auto& [g, blk] : a.entries()) {
    const Elem gi = G->inverse(g);
    Mat adj = blk.adjoint();
    if (G->twisted) adj *= std::conj(G->cocycle(gi, g));
    r.set(gi, std::move(adj));
  }
  return r;
}

inline double sobolev_norm(const GammaSequence& a, double s) {
  if (s < 0) throw std::invalid_argument("sobolev_norm: s >= 0 required");
  if (a.entries().empty()) return 0.0;
  std::vector<Elem> supp;
  for (const auto& [g, blk] : a.entries()) supp.push_back(g);
  a.group()->ensure_contains(supp);
  double acc = 0;
  for (const auto& [g, blk] : a.entries()) {
    const double w = 1.0 + a.group()->word_length(g);
    acc += blk.squaredNorm() * std::pow(w, 2.0 * s);
  }
  return std::sqrt(acc);
}

inline SobolevProfile sobolev_profile(const GammaSequence& a, const std::vector<double>& ss) {
  SobolevProfile p;
  for (double s : ss) p.points.emplace_back(s, sobolev_norm(a, s));
  return p;
}

namespace detail {

struct ElemIndex {
  std::unordered_map<Elem, int, ElemHash> idx;
  explicit ElemIndex(const std::vector<Elem>& elems) {
    idx.reserve(elems.size() * 2);
    for (std::size_t i = 0; i < elems.size(); ++i) idx.emplace(elems[i], static_cast<int>(i));
  }
  int find(const Elem& g) const {
    auto it = idx.find(g);
    return it == idx.end() ? -1 : it->second;
  }
};

}  // namespace detail

// Matrix of the left-convolution action on the given column elements, rows
// kept for the given row elements: M[mu, nu] = sigma(mu nu^{-1}, nu) a_{mu nu^{-1}}.
inline SpMat action_matrix(const GammaSequence& a, const std::vector<Elem>& row_elems,
                           const std::vector<Elem>& col_elems) {
  const auto& G = a.group();
  const detail::ElemIndex rows(row_elems);
  const int br = a.rows(), bc = a.cols();
  SpMat M(static_cast<Eigen::Index>(row_elems.size()) * br,
          static_cast<Eigen::Index>(col_elems.size()) * bc);
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(a.support_size() * col_elems.size() * static_cast<std::size_t>(br));
  for (const auto& [g, blk] : a.entries()) {
    for (std::size_t jn = 0; jn < col_elems.size(); ++jn) {
      const Elem& nu = col_elems[jn];
      const int im = rows.find(G->multiply(g, nu));
      if (im < 0) continue;
      const cplx ph = G->twisted ? G->cocycle(g, nu) : cplx(1.0, 0.0);
      for (int i = 0; i < br; ++i)
        for (int j = 0; j < bc; ++j) {
          const cplx v = ph * blk(i, j);
          if (v != cplx(0.0, 0.0))
            trip.emplace_back(im * br + i, static_cast<int>(jn) * bc + j, v);
        }
    }
  }
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

inline Mat dense_action_matrix(const GammaSequence& a, const std::vector<Elem>& elems) {
  return Mat(action_matrix(a, elems, elems));
}

namespace detail {

// dominant singular value by power iteration on M^dagger M, deterministic start
inline double top_singular_value(const SpMat& M) {
  const Eigen::Index n = M.cols();
  if (n == 0 || M.rows() == 0 || M.nonZeros() == 0) return 0.0;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = cplx(std::cos(0.7 * static_cast<double>(i) + 0.3),
                0.4 * std::sin(1.3 * static_cast<double>(i) + 0.5));
  v.normalize();
  const SpMat Mh = SpMat(M.adjoint());
  double lam = 0;
  for (int it = 0; it < 10000; ++it) {
    Vec w = Mh * (M * v).eval();
    const double nl = std::sqrt(w.norm());
    if (nl == 0.0) return 0.0;
    v = w / w.norm();
    if (it > 4 && std::abs(nl - lam) <= 1e-13 * std::max(1.0, nl)) return nl;
    lam = nl;
  }
  return lam;
}

}  // namespace detail

// Truncated operator norm: largest singular value of the action on
// l^2(ball(R)) x C^cols with output rows restricted to ball(R - r_supp).
inline double operator_norm(const GammaSequence& a, int R) {
  if (a.entries().empty()) return 0.0;
  const auto& G = a.group();
  const int r = a.support_radius();
  if (R < 2 * r)
    std::cerr << "warning: operator_norm: R=" << R << " is below the support diameter bound "
              << 2 * r << "; estimate may be loose\n";
  const int Rin = std::max(0, R - r);
  G->ensure_radius(std::max(R, Rin + r));
  const auto cols = G->ball(R);
  const auto rows = G->ball(Rin);
  return detail::top_singular_value(action_matrix(a, rows, cols));
}

// delta^n(a): kernel with coefficients (L(mu) - L(nu))^n sigma(mu nu^{-1}, nu) a_{mu nu^{-1}}
// acting on l^2(ball). Not itself a GammaSequence for n >= 1; returned as a
// diagnostic that can materialize its matrix and truncated operator norm.
struct DerivationPower {
  GammaSequence a;
  int n;

  SpMat matrix(int R) const {
    const auto& G = a.group();
    const int r = a.support_radius();
    const int Rin = std::max(0, R - r);
    G->ensure_radius(std::max(R, Rin + r));
    const auto cols = G->ball(R);
    const auto rows = G->ball(Rin);
    SpMat M = action_matrix(a, rows, cols);
    if (n == 0) return M;
    const int br = a.rows();
    const int bc = a.cols();
    for (Eigen::Index k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it) {
        const int Lr = G->word_length(rows[static_cast<std::size_t>(it.row() / br)]);
        const int Lc = G->word_length(cols[static_cast<std::size_t>(it.col() / bc)]);
        it.valueRef() *= std::pow(static_cast<double>(Lr - Lc), n);
      }
    return M;
  }

  double operator_norm(int R) const { return detail::top_singular_value(matrix(R)); }
};

inline DerivationPower derivation_power(const GammaSequence& a, int n) {
  if (n < 0) throw std::invalid_argument("derivation_power: n >= 0 required");
  return DerivationPower{a, n};
}

// (h|k)_gamma = sum_rho conj(sigma(rho, gamma)) <h_rho, k_{rho gamma}>; the twisted
// factor keeps (h | k*a) = (h|k)*a and (k|h) = (h|k)^* exact for nontrivial sigma.
inline GammaSequence module_inner_product(const GammaSequence& h, const GammaSequence& k) {
  if (!same_group(h.group(), k.group()) || h.rows() != k.rows() || h.cols() != 1 || k.cols() != 1)
    throw std::invalid_argument("module_inner_product: column-vector sequences over one group");
  const auto& G = h.group();
  GammaSequence r(G, 1, 1);
  for (const auto& [rho, hblk] : h.entries()) {
    const Elem rho_inv = G->inverse(rho);
    for (const auto& [tau, kblk] : k.entries()) {
      const Elem gamma = G->multiply(rho_inv, tau);
      cplx v = (hblk.adjoint() * kblk)(0, 0);
      if (G->twisted) v *= std::conj(G->cocycle(rho, gamma));
      r.add(gamma, Mat::Constant(1, 1, v));
    }
  }
  return r.pruned();
}

// identity-cell extraction: kernel of a dense operator in the left-action
// picture, read off the identity column, which carries no cocycle phase
inline GammaSequence kernel_from_dense(const Mat& P, const std::vector<Elem>& elems,
                                       const GroupRef& G, int rows, int cols, int keep_radius) {
  detail::ElemIndex idx(elems);
  const int ie = idx.find(Elem{0, 0, 0, 0});
  if (ie < 0) throw std::invalid_argument("kernel_from_dense: identity not in basis");
  G->ensure_radius(keep_radius);
  GammaSequence out(G, rows, cols);
  for (const auto& g : G->ball(keep_radius)) {
    const int im = idx.find(g);
    if (im < 0) continue;
    Mat blk = P.block(im * rows, ie * cols, rows, cols);
    if (blk.norm() > kPruneTol) out.set(g, std::move(blk));
  }
  return out;
}

}  // namespace wanlab
