#pragma once

// Symmetry groups: normal forms, word metric, Cayley balls, growth, 2-cocycles.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace wanlab {

// Normal form, fixed width; coordinates beyond the family's arity stay zero.
//   Zd(d):        (n_1..n_d)
//   Pg:           (n1, n2), n2 counts glide applications
//   InfDihedral:  (n, r), r in {0,1}
//   HeisZ:        (x, y, z) upper-triangular coordinates
//   TwistedZ2:    (n1, n2), twist carried by the cocycle
using Elem = std::array<std::int32_t, 4>;

enum class Family { Zd, Pg, InfDihedral, HeisZ, TwistedZ2 };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Zd: return "Zd";
    case Family::Pg: return "Pg";
    case Family::InfDihedral: return "InfDihedral";
    case Family::HeisZ: return "HeisZ";
    case Family::TwistedZ2: return "TwistedZ2";
  }
  return "?";
}

class RadiusExceeded : public std::runtime_error {
 public:
  int searched_radius;
  explicit RadiusExceeded(int r)
      : std::runtime_error("radius exceeded: element not within cached ball of radius " +
                           std::to_string(r)),
        searched_radius(r) {}
};

struct ElemHash {
  std::size_t operator()(const Elem& e) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : e) {
      h ^= static_cast<std::uint32_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

class GroupDescriptor {
 public:
  Family family;
  int arity;                     // coordinates in use
  int rank_d = 0;                // Zd only
  double theta = 0.0;
  bool twisted = false;
  std::vector<Elem> generators;  // S = S^{-1}, identity excluded

  static std::shared_ptr<const GroupDescriptor> zd(int d) {
    if (d < 1 || d > 4) throw std::invalid_argument("zd: d must be in 1..4");
    auto g = std::shared_ptr<GroupDescriptor>(new GroupDescriptor());
    g->family = Family::Zd;
    g->arity = d;
    g->rank_d = d;
    for (int i = 0; i < d; ++i) {
      Elem e{};
      e[i] = 1;
      g->generators.push_back(e);
      e[i] = -1;
      g->generators.push_back(e);
    }
    g->init();
    return g;
  }

  static std::shared_ptr<const GroupDescriptor> pg() {
    auto g = std::shared_ptr<GroupDescriptor>(new GroupDescriptor());
    g->family = Family::Pg;
    g->arity = 2;
    g->generators = {Elem{1, 0, 0, 0}, Elem{-1, 0, 0, 0}, Elem{0, 1, 0, 0}, Elem{0, -1, 0, 0}};
    g->init();
    return g;
  }

  static std::shared_ptr<const GroupDescriptor> inf_dihedral() {
    auto g = std::shared_ptr<GroupDescriptor>(new GroupDescriptor());
    g->family = Family::InfDihedral;
    g->arity = 2;
    // translation pair plus the (self-inverse) reflection
    g->generators = {Elem{1, 0, 0, 0}, Elem{-1, 0, 0, 0}, Elem{0, 1, 0, 0}};
    g->init();
    return g;
  }

  static std::shared_ptr<const GroupDescriptor> heis() {
    auto g = std::shared_ptr<GroupDescriptor>(new GroupDescriptor());
    g->family = Family::HeisZ;
    g->arity = 3;
    g->generators = {Elem{1, 0, 0, 0}, Elem{-1, 0, 0, 0}, Elem{0, 1, 0, 0}, Elem{0, -1, 0, 0}};
    g->init();
    return g;
  }

  static std::shared_ptr<const GroupDescriptor> twisted_z2(double theta) {
    auto g = std::shared_ptr<GroupDescriptor>(new GroupDescriptor());
    g->family = Family::TwistedZ2;
    g->arity = 2;
    g->theta = theta;
    g->twisted = (theta != 0.0);
    g->generators = {Elem{1, 0, 0, 0}, Elem{-1, 0, 0, 0}, Elem{0, 1, 0, 0}, Elem{0, -1, 0, 0}};
    g->init();
    return g;
  }

  Elem identity() const { return Elem{0, 0, 0, 0}; }

  Elem multiply(const Elem& a, const Elem& b) const {
    Elem r{};
    switch (family) {
      case Family::Zd:
      case Family::TwistedZ2:
        for (int i = 0; i < arity; ++i) r[i] = a[i] + b[i];
        return r;
      case Family::Pg: {
        const int s = (a[1] & 1) ? -1 : 1;
        r[0] = a[0] + s * b[0];
        r[1] = a[1] + b[1];
        return r;
      }
      case Family::InfDihedral: {
        const int s = (a[1] & 1) ? -1 : 1;
        r[0] = a[0] + s * b[0];
        r[1] = (a[1] + b[1]) & 1;
        return r;
      }
      case Family::HeisZ:
        r[0] = a[0] + b[0];
        r[1] = a[1] + b[1];
        r[2] = a[2] + b[2] + a[0] * b[1];
        return r;
    }
    return r;
  }

  Elem inverse(const Elem& a) const {
    Elem r{};
    switch (family) {
      case Family::Zd:
      case Family::TwistedZ2:
        for (int i = 0; i < arity; ++i) r[i] = -a[i];
        return r;
      case Family::Pg: {
        const int s = (a[1] & 1) ? -1 : 1;
        r[0] = -s * a[0];
        r[1] = -a[1];
        return r;
      }
      case Family::InfDihedral: {
        const int s = (a[1] & 1) ? -1 : 1;
        r[0] = -s * a[0];
        r[1] = a[1] & 1;
        return r;
      }
      case Family::HeisZ:
        r[0] = -a[0];
        r[1] = -a[1];
        r[2] = -a[2] + a[0] * a[1];
        return r;
    }
    return r;
  }

  // Landau gauge on Z^2: sigma((a,b),(c,d)) = exp(2 pi i theta b c); 1 when untwisted.
  std::complex<double> cocycle(const Elem& a, const Elem& b) const {
    if (!twisted) return {1.0, 0.0};
    const double ph = 2.0 * M_PI * theta * static_cast<double>(a[1]) * static_cast<double>(b[0]);
    return {std::cos(ph), std::sin(ph)};
  }

  bool verify_cocycle_identity(int samples, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coord(-20, 20);
    auto draw = [&]() {
      Elem e{};
      for (int i = 0; i < arity; ++i) e[i] = coord(rng);
      if (family == Family::InfDihedral) e[1] &= 1;
      return e;
    };
    for (int s = 0; s < samples; ++s) {
      const Elem g1 = draw(), g2 = draw(), g3 = draw();
      const auto lhs = cocycle(g1, g2) * cocycle(multiply(g1, g2), g3);
      const auto rhs = cocycle(g1, multiply(g2, g3)) * cocycle(g2, g3);
      if (std::abs(lhs - rhs) > 1e-12) return false;
    }
    return true;
  }

  // Minimal generator count. Looks up the memoized BFS table only; elements
  // beyond the cached radius fail loudly rather than extending the cache.
  int word_length(const Elem& g) const {
    std::shared_lock lk(mu_);
    auto it = length_.find(g);
    if (it == length_.end()) throw RadiusExceeded(cached_radius_unlocked());
    return it->second;
  }

  int cached_radius() const {
    std::shared_lock lk(mu_);
    return cached_radius_unlocked();
  }

  void ensure_radius(int R) const {
    if (R < 0) return;
    {
      std::shared_lock lk(mu_);
      if (cached_radius_unlocked() >= R) return;
    }
    std::unique_lock lk(mu_);
    extend_unlocked(R);
  }

  // Elements with L <= R in BFS discovery order, lexicographic within a shell.
  std::vector<Elem> ball(int R) const {
    ensure_radius(R);
    std::shared_lock lk(mu_);
    return std::vector<Elem>(order_.begin(), order_.begin() + offsets_[static_cast<size_t>(R)]);
  }

  std::size_t ball_size(int R) const {
    ensure_radius(R);
    std::shared_lock lk(mu_);
    return offsets_[static_cast<size_t>(R)];
  }

  // Least-squares slope of log|B_R| vs log R over R in [max(1, R_max/2), R_max].
  double growth_exponent(int R_max) const {
    if (R_max < 4) throw std::invalid_argument("growth_exponent: R_max >= 4 required");
    ensure_radius(R_max);
    std::shared_lock lk(mu_);
    const int lo = std::max(1, R_max / 2);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int R = lo; R <= R_max; ++R) {
      const double x = std::log(static_cast<double>(R));
      const double y = std::log(static_cast<double>(offsets_[static_cast<size_t>(R)]));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }

  // Extends the cache until every element of `elems` has a cached length.
  // Extension is explicit and capped so runaway supports fail loudly.
  void ensure_contains(const std::vector<Elem>& elems, int radius_cap = 512) const {
    for (const auto& e : elems) {
      for (;;) {
        {
          std::shared_lock lk(mu_);
          if (length_.count(e)) break;
        }
        int next;
        {
          std::shared_lock lk(mu_);
          next = cached_radius_unlocked() + 4;
        }
        if (next > radius_cap) throw RadiusExceeded(radius_cap);
        ensure_radius(next);
      }
    }
  }

 private:
  GroupDescriptor() = default;

  void init() {
    order_.push_back(identity());
    offsets_.push_back(1);
    length_.emplace(identity(), 0);
  }

  int cached_radius_unlocked() const { return static_cast<int>(offsets_.size()) - 1; }

  void extend_unlocked(int R) const {
    int have = cached_radius_unlocked();
    while (have < R) {
      const std::size_t lo = (have == 0) ? 0 : offsets_[static_cast<size_t>(have - 1)];
      const std::size_t hi = offsets_[static_cast<size_t>(have)];
      std::vector<Elem> next;
      for (std::size_t i = lo; i < hi; ++i) {
        for (const auto& s : generators) {
          Elem y = multiply(order_[i], s);
          if (!length_.count(y)) {
            length_.emplace(y, have + 1);
            next.push_back(y);
          }
        }
      }
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      for (const auto& y : next) order_.push_back(y);
      offsets_.push_back(order_.size());
      ++have;
    }
  }

  mutable std::shared_mutex mu_;
  mutable std::vector<Elem> order_;
  mutable std::vector<std::size_t> offsets_;
  mutable std::unordered_map<Elem, int, ElemHash> length_;
};

using GroupRef = std::shared_ptr<const GroupDescriptor>;

}  // namespace wanlab
