#pragma once

// A cocycle (f, S): a base system plus a rule x -> S_x, with iterates
// S^k_x = S_{f^{k-1}x} ... S_x and the factorization through the normal part.

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "base_dynamics.hpp"
#include "linalg.hpp"

namespace stochdom {

/// One matrix per cycle index; the base must be a FiniteCycle of matching length.
struct Tabulated {
  std::vector<StochasticMatrix> matrices;
};

/// Piecewise constant in the circle coordinate: cell k is [breakpoints[k],
/// breakpoints[k+1]) with the last cell closing at 1. breakpoints[0] == 0.
struct LocallyConstant {
  std::vector<double> breakpoints;
  std::vector<StochasticMatrix> matrices;
};

/// Continuous, periodic, piecewise-linear interpolation between matrices
/// attached to ascending anchors in [0,1). Values are convex combinations.
struct Interpolated {
  std::vector<double> anchors;
  std::vector<StochasticMatrix> matrices;
};

/// Programmatic generator (not serializable). Values are validated per call.
struct Functional {
  std::function<Matrix(const BasePoint&)> fn;
  Index n = 0;
  std::string description;
};

using Generator = std::variant<Tabulated, LocallyConstant, Interpolated, Functional>;

class CocycleSpec {
 public:
  CocycleSpec(BaseSystem base, Generator generator, Tolerances tol = {})
      : base_(std::move(base)), gen_(std::move(generator)), tol_(tol) {
    n_ = std::visit([this](const auto& g) { return check(g); }, gen_);
  }

  Index dim() const { return n_; }
  const BaseSystem& base() const { return base_; }
  const Generator& generator() const { return gen_; }
  const Tolerances& tolerances() const { return tol_; }

  /// S_x.
  Matrix at(const BasePoint& x) const {
    base_.validate(x);
    if (const auto* t = std::get_if<Tabulated>(&gen_))
      return t->matrices[std::get<std::size_t>(x)].matrix();
    const double c = coordinate(x, base_);
    if (const auto* lc = std::get_if<LocallyConstant>(&gen_)) {
      const auto it = std::upper_bound(lc->breakpoints.begin(), lc->breakpoints.end(), c);
      const auto cell = static_cast<std::size_t>(std::distance(lc->breakpoints.begin(), it)) - 1;
      return lc->matrices[cell].matrix();
    }
    if (const auto* ip = std::get_if<Interpolated>(&gen_)) return interpolate(*ip, c);
    const auto& f = std::get<Functional>(gen_);
    Matrix m = f.fn(x);
    if (m.rows() != n_ || !is_stochastic(m, tol_.stochastic))
      fail_numerical("generator_not_stochastic",
                     "functional generator '" + f.description + "' returned an invalid matrix at " +
                         describe(x));
    return m;
  }

  /// Same rule applied to every generator matrix; used for the deformation
  /// S -> P + rho (S - P), which commutes with convex interpolation.
  CocycleSpec map_matrices(const std::function<Matrix(const Matrix&)>& op) const {
    auto map_all = [&](const std::vector<StochasticMatrix>& ms) {
      std::vector<StochasticMatrix> out;
      out.reserve(ms.size());
      for (const auto& m : ms) out.push_back(StochasticMatrix::from(op(m.matrix()), tol_.stochastic));
      return out;
    };
    if (const auto* t = std::get_if<Tabulated>(&gen_)) return {base_, Tabulated{map_all(t->matrices)}, tol_};
    if (const auto* lc = std::get_if<LocallyConstant>(&gen_))
      return {base_, LocallyConstant{lc->breakpoints, map_all(lc->matrices)}, tol_};
    if (const auto* ip = std::get_if<Interpolated>(&gen_))
      return {base_, Interpolated{ip->anchors, map_all(ip->matrices)}, tol_};
    const auto& f = std::get<Functional>(gen_);
    auto inner = f.fn;
    return {base_, Functional{[inner, op](const BasePoint& x) { return op(inner(x)); }, f.n, f.description + " (mapped)"},
            tol_};
  }

 private:
  static Index common_dim(const std::vector<StochasticMatrix>& ms) {
    require(!ms.empty(), "empty_generator", "generator needs at least one matrix");
    const Index n = ms.front().size();
    for (const auto& m : ms) require(m.size() == n, "dimension_mismatch", "generator matrices differ in size");
    return n;
  }

  Index check(const Tabulated& t) const {
    const auto q = base_.period();
    require(q.has_value(), "invalid_generator", "tabulated generator needs a finite-cycle base");
    require(t.matrices.size() == *q, "invalid_generator",
            "tabulated generator has " + std::to_string(t.matrices.size()) + " matrices for q = " +
                std::to_string(*q));
    return common_dim(t.matrices);
  }

  static Index check(const LocallyConstant& lc) {
    require(lc.breakpoints.size() == lc.matrices.size(), "invalid_generator",
            "locally_constant needs one matrix per breakpoint");
    require(!lc.breakpoints.empty() && lc.breakpoints.front() == 0.0, "invalid_generator",
            "locally_constant breakpoints must start at 0");
    for (std::size_t k = 1; k < lc.breakpoints.size(); ++k)
      require(lc.breakpoints[k] > lc.breakpoints[k - 1] && lc.breakpoints[k] < 1.0, "invalid_generator",
              "locally_constant breakpoints must increase inside [0,1)");
    return common_dim(lc.matrices);
  }

  static Index check(const Interpolated& ip) {
    require(ip.anchors.size() == ip.matrices.size(), "invalid_generator",
            "interpolated needs one matrix per anchor");
    require(!ip.anchors.empty(), "invalid_generator", "interpolated needs anchors");
    for (std::size_t k = 0; k < ip.anchors.size(); ++k) {
      require(ip.anchors[k] >= 0.0 && ip.anchors[k] < 1.0, "invalid_generator", "anchors must lie in [0,1)");
      if (k > 0) require(ip.anchors[k] > ip.anchors[k - 1], "invalid_generator", "anchors must increase");
    }
    return common_dim(ip.matrices);
  }

  static Index check(const Functional& f) {
    require(static_cast<bool>(f.fn) && f.n >= 2, "invalid_generator", "functional generator needs fn and n >= 2");
    return f.n;
  }

  static Matrix interpolate(const Interpolated& ip, double c) {
    const std::size_t m = ip.anchors.size();
    if (m == 1) return ip.matrices.front().matrix();
    // Locate the arc [a_k, a_{k+1}) containing c, wrapping around 1.
    auto it = std::upper_bound(ip.anchors.begin(), ip.anchors.end(), c);
    std::size_t hi = static_cast<std::size_t>(std::distance(ip.anchors.begin(), it)) % m;
    std::size_t lo = (hi + m - 1) % m;
    double a = ip.anchors[lo];
    double b = ip.anchors[hi];
    double pos = c;
    if (b <= a) b += 1.0;
    if (pos < a) pos += 1.0;
    const double w = (pos - a) / (b - a);
    return (1.0 - w) * ip.matrices[lo].matrix() + w * ip.matrices[hi].matrix();
  }

  BaseSystem base_;
  Generator gen_;
  Tolerances tol_;
  Index n_ = 0;
};

/// The matrices S_x, S_{f(x)}, ..., S_{f^{length-1}(x)}.
inline std::vector<Matrix> orbit_matrices(const CocycleSpec& c, const BasePoint& x, std::size_t length) {
  std::vector<Matrix> out;
  out.reserve(length);
  BasePoint p = x;
  for (std::size_t i = 0; i < length; ++i) {
    out.push_back(c.at(p));
    if (i + 1 < length) p = c.base().forward(p);
  }
  return out;
}

/// S^k_x, accumulated left-multiplicatively; S^0_x = I.
inline Matrix iterate(const CocycleSpec& c, const BasePoint& x, std::size_t k) {
  Matrix acc = Matrix::Identity(c.dim(), c.dim());
  BasePoint p = x;
  for (std::size_t i = 0; i < k; ++i) {
    acc = c.at(p) * acc;
    p = c.base().forward(p);
  }
  return acc;
}

/// Normal iterate in N-coordinates, composed from one-step normal parts.
inline NormalOperator iterate_normal(const CocycleSpec& c, const ProjectionPair& proj, const BasePoint& x,
                                     std::size_t k) {
  require(proj.dim() == c.dim(), "dimension_mismatch", "iterate_normal");
  Matrix acc = Matrix::Identity(c.dim() - 1, c.dim() - 1);
  BasePoint p = x;
  for (std::size_t i = 0; i < k; ++i) {
    acc = normal_part(c.at(p), proj).matrix * acc;
    p = c.base().forward(p);
  }
  return {acc};
}

/// S^k = P + P S^k Q + Q S^k Q, each term an n x n matrix.
struct Decomposition {
  Matrix p_part;
  Matrix psq_part;
  Matrix normal_part;

  Matrix sum() const { return p_part + psq_part + normal_part; }
};

inline Decomposition decompose(const CocycleSpec& c, const ProjectionPair& proj, const BasePoint& x,
                               std::size_t k) {
  require(proj.dim() == c.dim(), "dimension_mismatch", "decompose");
  const Matrix sk = iterate(c, x, k);
  return {proj.P(), proj.P() * sk * proj.Q(), proj.Q() * sk * proj.Q()};
}

}  // namespace stochdom
