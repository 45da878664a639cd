#pragma once

// Dense small-n linear algebra for stochastic matrices: the projections onto
// u = (1,...,1)/sqrt(n) and its complement N, restricted norms, angles,
// subspaces and the affine coordinates S -> (QS, column means).

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "random.hpp"
#include "tolerances.hpp"

namespace stochdom {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

inline Vector singular_values(const Matrix& a) {
  if (a.size() == 0) return Vector();
  return Eigen::JacobiSVD<Matrix>(a).singularValues();
}

/// Largest singular value.
inline double operator_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return singular_values(a)[0];
}

/// Smallest singular value of a map on its whole domain: m(A) = 1/|A^-1|.
/// Returns 0 when the map has a kernel.
inline double co_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Vector s = singular_values(a);
  if (a.rows() < a.cols()) return 0.0;
  return s[s.size() - 1];
}

/// Co-norm of A restricted to span(basis); basis has orthonormal columns.
inline double co_norm(const Matrix& a, const Matrix& basis) {
  require(a.cols() == basis.rows(), "dimension_mismatch",
          "co_norm: map " + dims(a) + " vs basis " + dims(basis));
  return co_norm(a * basis);
}

inline Index numerical_rank(const Matrix& a, double relative_tol) {
  if (a.size() == 0) return 0;
  const Vector s = singular_values(a);
  if (s[0] == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > relative_tol * s[0]) ++r;
  return r;
}

inline double infinity_norm(const Matrix& a) {
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

// ---------------------------------------------------------------------------
// Stochastic matrices

inline bool is_stochastic(const Matrix& m, double tol = Tolerances{}.stochastic) {
  if (m.rows() != m.cols() || m.rows() < 2) return false;
  if (!m.allFinite()) return false;
  if (m.minCoeff() < -tol || m.maxCoeff() > 1.0 + tol) return false;
  return ((m.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

/// n x n row-stochastic matrix, n >= 2. Construction validates; repair of
/// slightly-off input is only available through `renormalized`.
class StochasticMatrix {
 public:
  static StochasticMatrix from(Matrix m, double tol = Tolerances{}.stochastic) {
    if (m.rows() != m.cols() || m.rows() < 2)
      fail_validation("not_square", "stochastic matrix must be n x n with n >= 2, got " + dims(m));
    if (!is_stochastic(m, tol)) {
      std::ostringstream os;
      os << "entries must lie in [0,1] and rows sum to 1 (tol " << tol << "); min entry "
         << m.minCoeff() << ", max row-sum defect "
         << (m.rowwise().sum().array() - 1.0).abs().maxCoeff();
      fail_validation("not_stochastic", os.str());
    }
    return StochasticMatrix(std::move(m));
  }

  /// Explicit repair: clamps negative entries to zero and rescales rows.
  static StochasticMatrix renormalized(Matrix m) {
    if (m.rows() != m.cols() || m.rows() < 2)
      fail_validation("not_square", "cannot renormalize " + dims(m));
    m = m.cwiseMax(0.0);
    for (Index i = 0; i < m.rows(); ++i) {
      const double s = m.row(i).sum();
      if (!(s > 0.0)) fail_validation("zero_row", "row " + std::to_string(i) + " has no mass");
      m.row(i) /= s;
    }
    return StochasticMatrix(std::move(m));
  }

  static StochasticMatrix identity(Index n) { return from(Matrix::Identity(n, n)); }

  /// The matrix of P: every entry 1/n.
  static StochasticMatrix uniform(Index n) {
    return from(Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
  }

  const Matrix& matrix() const { return m_; }
  Index size() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  friend StochasticMatrix operator*(const StochasticMatrix& a, const StochasticMatrix& b) {
    require(a.size() == b.size(), "dimension_mismatch", "product of stochastic matrices");
    return StochasticMatrix(a.m_ * b.m_);
  }

  friend bool operator==(const StochasticMatrix& a, const StochasticMatrix& b) {
    return a.m_ == b.m_;
  }

 private:
  explicit StochasticMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

// ---------------------------------------------------------------------------
// Projections P (onto uR) and Q (onto N = u-perp)

enum class Projection { P, Q };

class ProjectionPair {
 public:
  explicit ProjectionPair(Index n) : n_(n) {
    require(n >= 2, "invalid_dimension", "projection pair needs n >= 2");
    u_ = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    p_ = u_ * u_.transpose();
    q_ = Matrix::Identity(n, n) - p_;
    // Householder reflection swapping e_1 and u; its remaining columns are a
    // fixed orthonormal basis of N.
    Vector w = u_;
    w[0] -= 1.0;
    const Matrix h = Matrix::Identity(n, n) - 2.0 * w * w.transpose() / w.squaredNorm();
    basis_ = h.rightCols(n - 1);
  }

  Index dim() const { return n_; }
  const Vector& u() const { return u_; }
  const Matrix& P() const { return p_; }
  const Matrix& Q() const { return q_; }
  /// n x (n-1), orthonormal columns spanning N.
  const Matrix& normal_basis() const { return basis_; }

  /// N-coordinates of a vector (its Q-part expressed in normal_basis).
  Vector to_normal(const Vector& v) const { return basis_.transpose() * v; }
  Vector from_normal(const Vector& c) const { return basis_ * c; }

 private:
  Index n_;
  Vector u_;
  Matrix p_, q_, basis_;
};

inline Vector project(const ProjectionPair& p, Projection which, const Vector& v) {
  require(v.size() == p.dim(), "dimension_mismatch",
          "project: vector of length " + std::to_string(v.size()) + " for n = " +
              std::to_string(p.dim()));
  return which == Projection::P ? Vector(p.u() * p.u().dot(v)) : Vector(v - p.u() * p.u().dot(v));
}

// ---------------------------------------------------------------------------
// Subspaces

class Subspace {
 public:
  /// Orthonormal basis of the column span; columns with relative singular
  /// value below `rank_tol` are dropped.
  static Subspace span(const Matrix& vectors, double rank_tol = 1e-12) {
    if (vectors.cols() == 0 || vectors.rows() == 0)
      fail_validation("empty_subspace", "span of no vectors");
    Eigen::JacobiSVD<Matrix> svd(vectors, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    Index r = 0;
    if (s[0] > 0.0)
      for (Index i = 0; i < s.size(); ++i)
        if (s[i] > rank_tol * s[0]) ++r;
    if (r == 0) fail_validation("empty_subspace", "vectors span only the zero subspace");
    if (vectors.cols() == 1) return Subspace(vectors / vectors.norm());
    return Subspace(svd.matrixU().leftCols(r));
  }

  static Subspace from_orthonormal(Matrix basis, double tol = 1e-12) {
    if (basis.cols() == 0 || basis.cols() > basis.rows())
      fail_validation("invalid_subspace", "basis shape " + dims(basis));
    const double defect =
        (basis.transpose() * basis - Matrix::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    if (defect > tol)
      fail_validation("not_orthonormal", "basis Gram defect " + std::to_string(defect));
    return Subspace(std::move(basis));
  }

  static Subspace full(Index n) { return Subspace(Matrix::Identity(n, n)); }

  static Subspace line(const Vector& v) {
    if (v.norm() == 0.0) fail_validation("zero_vector", "line through the zero vector");
    return Subspace(v / v.norm());
  }

  Index ambient_dim() const { return basis_.rows(); }
  Index dim() const { return basis_.cols(); }
  const Matrix& basis() const { return basis_; }
  Matrix projector() const { return basis_ * basis_.transpose(); }

  /// Orthogonal complement; fails for the full space.
  Subspace complement() const {
    if (dim() == ambient_dim()) fail_validation("empty_subspace", "complement of the full space");
    Eigen::JacobiSVD<Matrix> svd(basis_, Eigen::ComputeFullU);
    return Subspace(svd.matrixU().rightCols(ambient_dim() - dim()));
  }

  /// Distance of `v` from the subspace.
  double residual(const Vector& v) const { return (v - basis_ * (basis_.transpose() * v)).norm(); }

 private:
  explicit Subspace(Matrix basis) : basis_(std::move(basis)) {}
  Matrix basis_;
};

inline Subspace direct_sum(const Subspace& a, const Subspace& b) {
  require(a.ambient_dim() == b.ambient_dim(), "dimension_mismatch", "direct_sum");
  Matrix stacked(a.ambient_dim(), a.dim() + b.dim());
  stacked << a.basis(), b.basis();
  return Subspace::span(stacked);
}

/// Non-oriented angle between v and the closest line in W, in [0, pi/2].
inline double angle(const Vector& v, const Subspace& w) {
  require(v.size() == w.ambient_dim(), "dimension_mismatch", "angle: vector vs subspace");
  const double norm = v.norm();
  if (!(norm > 0.0)) fail_validation("zero_vector", "angle of the zero vector");
  const Vector unit = v / norm;
  const Vector inside = w.basis().transpose() * unit;
  const double outside = (unit - w.basis() * inside).norm();
  return std::atan2(outside, inside.norm());
}

/// Largest principal angle between subspaces of equal dimension.
inline double subspace_distance(const Subspace& a, const Subspace& b) {
  require(a.ambient_dim() == b.ambient_dim() && a.dim() == b.dim(), "dimension_mismatch",
          "subspace_distance needs equal dimensions");
  const Matrix off = a.basis() - b.basis() * (b.basis().transpose() * a.basis());
  return std::asin(std::min(1.0, operator_norm(off)));
}

/// Defect of `image` lying inside `target`: |(I - Pi_target) image|.
inline double containment_defect(const Matrix& image, const Subspace& target) {
  return operator_norm(image - target.basis() * (target.basis().transpose() * image));
}

// ---------------------------------------------------------------------------
// Normal part

/// Action of QSQ on N expressed in ProjectionPair::normal_basis coordinates.
struct NormalOperator {
  Matrix matrix;
};

inline NormalOperator normal_part(const Matrix& s, const ProjectionPair& p) {
  require(s.rows() == p.dim() && s.cols() == p.dim(), "dimension_mismatch",
          "normal_part of " + dims(s) + " with n = " + std::to_string(p.dim()));
  return {p.normal_basis().transpose() * s * p.normal_basis()};
}

inline NormalOperator normal_part(const StochasticMatrix& s, const ProjectionPair& p) {
  return normal_part(s.matrix(), p);
}

// ---------------------------------------------------------------------------
// Affine coordinates of the row-sum-one space

struct ThetaCoordinates {
  Matrix a;  // QS: every row and column sums to zero
  Vector v;  // column means kappa(S); sums to one
};

inline ThetaCoordinates theta(const Matrix& s, const ProjectionPair& p,
                              double tol = Tolerances{}.stochastic) {
  require(s.rows() == p.dim() && s.cols() == p.dim(), "dimension_mismatch", "theta");
  const double defect = (s.rowwise().sum().array() - 1.0).abs().maxCoeff();
  if (defect > tol)
    fail_validation("row_sum", "theta needs unit row sums, defect " + std::to_string(defect));
  ThetaCoordinates out;
  out.v = s.colwise().mean().transpose();
  out.a = s.rowwise() - out.v.transpose();
  return out;
}

inline Matrix theta_inv(const ThetaCoordinates& c, double tol = 1e-10) {
  require(c.a.rows() == c.a.cols() && c.a.rows() == c.v.size(), "dimension_mismatch", "theta_inv");
  const double row_defect = c.a.rowwise().sum().cwiseAbs().maxCoeff();
  const double col_defect = c.a.colwise().sum().cwiseAbs().maxCoeff();
  if (row_defect > tol || col_defect > tol)
    fail_validation("not_in_A", "theta_inv needs zero row and column sums");
  if (std::abs(c.v.sum() - 1.0) > tol)
    fail_validation("not_in_affine_simplex", "theta_inv needs v summing to one");
  return c.a.rowwise() + c.v.transpose();
}

/// Membership in the image QS of the stochastic matrices: zero row and column
/// sums and sum_j min_i a_ij >= -1.
inline bool in_qs_image(const Matrix& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  if (a.rowwise().sum().cwiseAbs().maxCoeff() > tol) return false;
  if (a.colwise().sum().cwiseAbs().maxCoeff() > tol) return false;
  return a.colwise().minCoeff().sum() >= -1.0 - tol;
}

// ---------------------------------------------------------------------------
// Generation and repair

struct RandomProfile {
  enum class Kind { uniform, near_identity };
  Kind kind = Kind::uniform;
  double epsilon = 0.0;

  static RandomProfile uniform() { return {}; }
  static RandomProfile near_identity(double eps) { return {Kind::near_identity, eps}; }
};

inline StochasticMatrix random_stochastic(Index n, Rng& rng,
                                          RandomProfile profile = RandomProfile::uniform()) {
  require(n >= 2, "invalid_dimension", "random_stochastic needs n >= 2");
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    Vector row = rng.dirichlet(n);
    if (profile.kind == RandomProfile::Kind::near_identity) {
      require(profile.epsilon >= 0.0 && profile.epsilon <= 1.0, "invalid_epsilon",
              "near_identity profile needs epsilon in [0,1]");
      row *= profile.epsilon;
      row[i] += 1.0 - profile.epsilon;
    }
    m.row(i) = row.transpose();
  }
  return StochasticMatrix::from(std::move(m));
}

/// Rank repair: while some row lies in the span of the others, replace it by
/// a nearby simplex point outside that span. Total Frobenius change <= eps.
inline StochasticMatrix make_invertible(const StochasticMatrix& s, double eps, Rng& rng,
                                        int max_draws = 64) {
  require(eps > 0.0, "invalid_epsilon", "make_invertible needs eps > 0");
  constexpr double kRankTol = 1e-10;
  const Index n = s.size();
  Matrix m = s.matrix();
  const double budget = 0.999 * eps / std::sqrt(static_cast<double>(n));

  auto without_row = [&](Index l) {
    Matrix r(n - 1, n);
    for (Index i = 0, k = 0; i < n; ++i)
      if (i != l) r.row(k++) = m.row(i);
    return r;
  };

  for (Index rank = numerical_rank(m, kRankTol); rank < n; rank = numerical_rank(m, kRankTol)) {
    Index dependent = -1;
    for (Index l = 0; l < n && dependent < 0; ++l)
      if (numerical_rank(without_row(l), kRankTol) == rank) dependent = l;
    if (dependent < 0) fail_numerical("rank_repair", "no dependent row found");

    bool repaired = false;
    const Vector original = m.row(dependent).transpose();
    for (int draw = 0; draw < max_draws && !repaired; ++draw) {
      const Vector target = rng.dirichlet(n);
      const Vector step = target - original;
      if (step.norm() == 0.0) continue;
      const double eta = std::min(1.0, budget / step.norm());
      m.row(dependent) = (original + eta * step).transpose();
      if (numerical_rank(m, kRankTol) > rank) repaired = true;
    }
    if (!repaired) {
      std::ostringstream os;
      os << "row " << dependent << " stayed in the span of the others after " << max_draws
         << " draws at eps = " << eps << " (rank " << rank << "); raise eps";
      fail_numerical("rank_repair", os.str());
    }
  }
  return StochasticMatrix::from(std::move(m));
}

}  // namespace stochdom
