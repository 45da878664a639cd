#pragma once

// Fibred piecewise-affine circle maps built from continuous families of
// interval partitions, their relative Ruelle cocycle A, the invariant density
// family h, and the normalized stochastic cocycle B.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "analysis.hpp"

namespace stochdom {

struct EllConstant {
  Matrix ell;
};

/// One matrix per point of a finite-cycle base.
struct EllTabulated {
  std::vector<Matrix> ell;
};

/// Periodic piecewise-linear interpolation in the circle coordinate.
struct EllInterpolated {
  std::vector<double> anchors;
  std::vector<Matrix> ell;
};

struct EllFunctional {
  std::function<Matrix(const BasePoint&)> fn;
  std::string description;
};

using EllGenerator = std::variant<EllConstant, EllTabulated, EllInterpolated, EllFunctional>;

inline constexpr double kEllFloor = 1e-6;

class PartitionFamily {
 public:
  PartitionFamily(BaseSystem base, Index n, EllGenerator ell, double floor = kEllFloor)
      : base_(std::move(base)), n_(n), gen_(std::move(ell)), floor_(floor) {
    require(n_ >= 2, "invalid_partition", "partition families need n >= 2");
    require(floor_ > 0.0 && floor_ * static_cast<double>(n_ * n_) < 1.0, "invalid_partition",
            "entry floor must be positive and below 1/n^2");
    if (const auto* c = std::get_if<EllConstant>(&gen_)) {
      check(c->ell, "constant");
    } else if (const auto* t = std::get_if<EllTabulated>(&gen_)) {
      const auto q = base_.period();
      require(q.has_value() && *q == t->ell.size(), "invalid_partition",
              "tabulated ell needs a finite-cycle base with one matrix per point");
      for (const auto& m : t->ell) check(m, "tabulated");
    } else if (const auto* ip = std::get_if<EllInterpolated>(&gen_)) {
      require(!ip->anchors.empty() && ip->anchors.size() == ip->ell.size(), "invalid_partition",
              "interpolated ell needs one matrix per anchor");
      for (std::size_t k = 0; k < ip->anchors.size(); ++k) {
        require(ip->anchors[k] >= 0.0 && ip->anchors[k] < 1.0, "invalid_partition", "anchors must lie in [0,1)");
        if (k > 0) require(ip->anchors[k] > ip->anchors[k - 1], "invalid_partition", "anchors must increase");
        check(ip->ell[k], "interpolated");
      }
    } else {
      require(static_cast<bool>(std::get<EllFunctional>(gen_).fn), "invalid_partition", "functional ell needs fn");
    }
  }

  Index n() const { return n_; }
  const BaseSystem& base() const { return base_; }
  const EllGenerator& generator() const { return gen_; }
  double floor() const { return floor_; }

  /// l^x: positive n x n, entries sum to one.
  Matrix ell(const BasePoint& x) const {
    base_.validate(x);
    if (const auto* c = std::get_if<EllConstant>(&gen_)) return c->ell;
    if (const auto* t = std::get_if<EllTabulated>(&gen_)) return t->ell[std::get<std::size_t>(x)];
    if (const auto* ip = std::get_if<EllInterpolated>(&gen_)) return interpolate(*ip, coordinate(x, base_));
    const auto& f = std::get<EllFunctional>(gen_);
    Matrix m = f.fn(x);
    if (!valid(m))
      fail_numerical("invalid_partition", "functional ell '" + f.description + "' returned an invalid matrix at " +
                                              describe(x));
    return m;
  }

 private:
  bool valid(const Matrix& m) const {
    return m.rows() == n_ && m.cols() == n_ && m.minCoeff() > floor_ && std::abs(m.sum() - 1.0) <= 1e-12;
  }

  void check(const Matrix& m, const std::string& what) const {
    require(m.rows() == n_ && m.cols() == n_, "invalid_partition", what + " ell has the wrong shape");
    require(m.minCoeff() > floor_, "invalid_partition",
            what + " ell entry " + std::to_string(m.minCoeff()) + " is not above the floor " + std::to_string(floor_));
    require(std::abs(m.sum() - 1.0) <= 1e-12, "invalid_partition", what + " ell entries must sum to 1");
  }

  static Matrix interpolate(const EllInterpolated& ip, double c) {
    const std::size_t m = ip.anchors.size();
    if (m == 1) return ip.ell.front();
    auto it = std::upper_bound(ip.anchors.begin(), ip.anchors.end(), c);
    const std::size_t hi = static_cast<std::size_t>(std::distance(ip.anchors.begin(), it)) % m;
    const std::size_t lo = (hi + m - 1) % m;
    double a = ip.anchors[lo], b = ip.anchors[hi], pos = c;
    if (b <= a) b += 1.0;
    if (pos < a) pos += 1.0;
    const double w = (pos - a) / (b - a);
    Matrix out = (1.0 - w) * ip.ell[lo] + w * ip.ell[hi];
    return out / out.sum();
  }

  BaseSystem base_;
  Index n_;
  EllGenerator gen_;
  double floor_;
};

/// Lexicographic cells I_ij = [breakpoints[i n + j], breakpoints[i n + j + 1]).
struct IntervalTable {
  Index n = 0;
  std::vector<double> breakpoints;  // n^2 + 1 entries, 0 .. 1

  double left(Index i, Index j) const { return breakpoints[static_cast<std::size_t>(i * n + j)]; }
  double length(Index i, Index j) const {
    const auto k = static_cast<std::size_t>(i * n + j);
    return breakpoints[k + 1] - breakpoints[k];
  }
  double atom_left(Index i) const { return left(i, 0); }
  double atom_length(Index i) const {
    return breakpoints[static_cast<std::size_t>((i + 1) * n)] - breakpoints[static_cast<std::size_t>(i * n)];
  }
  /// |I_i| for each i.
  Vector atoms() const {
    Vector a(n);
    for (Index i = 0; i < n; ++i) a[i] = atom_length(i);
    return a;
  }
};

inline IntervalTable build_intervals(const PartitionFamily& pf, const BasePoint& x) {
  const Matrix l = pf.ell(x);
  IntervalTable t;
  t.n = pf.n();
  t.breakpoints.reserve(static_cast<std::size_t>(t.n * t.n + 1));
  t.breakpoints.push_back(0.0);
  double acc = 0.0;
  for (Index i = 0; i < t.n; ++i)
    for (Index j = 0; j < t.n; ++j) {
      acc += l(i, j);
      t.breakpoints.push_back(acc);
    }
  t.breakpoints.back() = 1.0;
  return t;
}

namespace detail {

inline std::size_t locate_cell(const IntervalTable& t, double omega) {
  auto it = std::upper_bound(t.breakpoints.begin(), t.breakpoints.end(), omega);
  const auto k = static_cast<std::size_t>(std::distance(t.breakpoints.begin(), it));
  return std::min(k == 0 ? 0 : k - 1, t.breakpoints.size() - 2);
}

}  // namespace detail

/// T_x: cell I^x_ij maps affinely, orientation preserving, onto I^{f(x)}_j.
inline double fibred_map(const PartitionFamily& pf, const BasePoint& x, double omega) {
  require(omega >= 0.0 && omega < 1.0, "invalid_point", "fibre coordinate must lie in [0,1)");
  const IntervalTable here = build_intervals(pf, x);
  const IntervalTable there = build_intervals(pf, pf.base().forward(x));
  const std::size_t k = detail::locate_cell(here, omega);
  const Index n = pf.n();
  const Index i = static_cast<Index>(k) / n, j = static_cast<Index>(k) % n;
  const double slope = there.atom_length(j) / here.length(i, j);
  const double y = there.atom_left(j) + slope * (omega - here.left(i, j));
  return y >= 1.0 ? y - 1.0 : y;
}

/// |T_x'| on the cell containing omega.
inline double fibred_slope(const PartitionFamily& pf, const BasePoint& x, double omega) {
  const IntervalTable here = build_intervals(pf, x);
  const IntervalTable there = build_intervals(pf, pf.base().forward(x));
  const std::size_t k = detail::locate_cell(here, omega);
  const Index n = pf.n();
  return there.atom_length(static_cast<Index>(k) % n) / here.length(static_cast<Index>(k) / n, static_cast<Index>(k) % n);
}

/// (A^x)_ij = |I^x_ij| / |I^{f(x)}_j|.
inline Matrix ruelle_matrix(const PartitionFamily& pf, const BasePoint& x) {
  const Matrix l = pf.ell(x);
  const Vector next = build_intervals(pf, pf.base().forward(x)).atoms();
  Matrix a(pf.n(), pf.n());
  for (Index j = 0; j < pf.n(); ++j) a.col(j) = l.col(j) / next[j];
  return a;
}

/// max_i |sum_j |I^{f(x)}_j| A_ij - |I^x_i||: Lebesgue is preserved by L_x.
inline double conformality_defect(const PartitionFamily& pf, const BasePoint& x) {
  const Matrix a = ruelle_matrix(pf, x);
  const Vector here = build_intervals(pf, x).atoms();
  const Vector next = build_intervals(pf, pf.base().forward(x)).atoms();
  return (a * next - here).cwiseAbs().maxCoeff();
}

/// Hilbert projective distance between positive vectors.
inline double hilbert_distance(const Vector& a, const Vector& b) {
  const Vector r = a.cwiseQuotient(b);
  return std::log(r.maxCoeff() / r.minCoeff());
}

struct Density {
  Vector h;          // sum h = 1
  Vector lebesgue;   // sum |I_i| h_i = 1
  double diameter = 0.0;  // Hilbert diameter of the pushed cone
  std::size_t depth = 0;
};

inline constexpr double kDensityDiameter = 1e-10;

/// Pullback power method: push the positive cone from f^{-m}(x) to x.
inline Density solve_density(const PartitionFamily& pf, const BasePoint& x, std::size_t m) {
  require(m >= 1, "invalid_depth", "density pullback needs m >= 1");
  const Index n = pf.n();
  std::vector<BasePoint> back(m);
  BasePoint p = x;
  for (std::size_t k = 0; k < m; ++k) back[k] = p = pf.base().backward(p);
  Matrix cone = Matrix::Identity(n, n);
  Vector h = Vector::Ones(n) / static_cast<double>(n);
  for (std::size_t k = m; k-- > 0;) {
    const Matrix at = ruelle_matrix(pf, back[k]).transpose();
    cone = at * cone;
    for (Index c = 0; c < n; ++c) cone.col(c) /= cone.col(c).sum();
    h = at * h;
    h /= h.sum();
  }
  Density d;
  d.depth = m;
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b) d.diameter = std::max(d.diameter, hilbert_distance(cone.col(a), cone.col(b)));
  if (!(d.diameter <= kDensityDiameter))
    fail_numerical("density_not_converged", "Hilbert diameter " + std::to_string(d.diameter) + " after " +
                                                std::to_string(m) + " pullback steps at " + describe(x) +
                                                "; increase the pullback depth");
  d.h = h;
  d.lebesgue = h / build_intervals(pf, x).atoms().dot(h);
  return d;
}

struct DensityResidual {
  double projective = 0.0;  // || A^T h / sum - h' ||, sum-normalized
  double literal = 0.0;     // || A^T h - h' ||, Lebesgue-normalized
};

inline DensityResidual density_residual(const PartitionFamily& pf, const BasePoint& x, std::size_t m) {
  const Density here = solve_density(pf, x, m);
  const Density next = solve_density(pf, pf.base().forward(x), m);
  const Matrix at = ruelle_matrix(pf, x).transpose();
  const Vector pushed = at * here.h;
  DensityResidual r;
  r.projective = (pushed / pushed.sum() - next.h).norm();
  r.literal = (at * here.lebesgue - next.lebesgue).norm();
  return r;
}

/// B^x = diag(h_x) A^x diag(A^T h_x)^{-1}; columns sum to one.
inline Matrix normalized_matrix(const PartitionFamily& pf, const BasePoint& x, std::size_t m) {
  const Vector h = solve_density(pf, x, m).h;
  const Matrix a = ruelle_matrix(pf, x);
  const Vector pushed = a.transpose() * h;
  return h.asDiagonal() * a * pushed.cwiseInverse().asDiagonal();
}

inline constexpr std::size_t kDefaultPullback = 200;

/// x -> (B^x)^T over f^{-1}.
inline CocycleSpec normalized_cocycle(const PartitionFamily& pf, std::size_t m = kDefaultPullback) {
  BaseSystem inv = pf.base().inverse();
  if (const auto q = pf.base().period()) {
    std::vector<StochasticMatrix> ms;
    ms.reserve(*q);
    for (std::size_t k = 0; k < *q; ++k)
      ms.push_back(StochasticMatrix::from(normalized_matrix(pf, k, m).transpose()));
    return CocycleSpec(inv, Tabulated{std::move(ms)});
  }
  return CocycleSpec(inv, Functional{[pf, m](const BasePoint& x) -> Matrix {
                                       return normalized_matrix(pf, x, m).transpose();
                                     },
                                     pf.n(), "normalized ruelle cocycle"});
}

struct RuelleReport {
  Analysis analysis;
  std::size_t pullback = 0;
  double max_conformality_defect = 0.0;
  double max_projective_residual = 0.0;
  double max_literal_residual = 0.0;
  double min_density = 0.0;
};

inline RuelleReport analyze_ruelle(const PartitionFamily& pf, const AnalysisOptions& opt = {},
                                   std::size_t m = kDefaultPullback) {
  RuelleReport r;
  r.pullback = m;
  const CocycleSpec c = normalized_cocycle(pf, m);
  r.analysis = analyze(c, opt);
  r.min_density = std::numeric_limits<double>::infinity();
  for (const auto& x : r.analysis.sample) {
    r.max_conformality_defect = std::max(r.max_conformality_defect, conformality_defect(pf, x));
    const auto res = density_residual(pf, x, m);
    r.max_projective_residual = std::max(r.max_projective_residual, res.projective);
    r.max_literal_residual = std::max(r.max_literal_residual, res.literal);
    r.min_density = std::min(r.min_density, solve_density(pf, x, m).h.minCoeff());
  }
  return r;
}

}  // namespace stochdom
