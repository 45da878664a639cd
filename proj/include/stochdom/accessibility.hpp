#pragma once

// Near-identity stochastic transports carrying one direction of N to a
// multiple of a nearby one, and the composition R = S T built from them.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "linalg.hpp"

namespace stochdom {

struct TransportConstants {
  Index n = 0;
  double D = 0.0;  // (n-1) sqrt n
  double C = 0.0;  // D + 2 D^2

  explicit TransportConstants(Index dim) : n(dim) {
    D = static_cast<double>(dim - 1) * std::sqrt(static_cast<double>(dim));
    C = D + 2.0 * D * D;
  }
};

/// [v_i + eps (alpha - v_i), v_i + eps (beta - v_i)] for each i: the set of
/// values (S v)_i over S with max |s_ij - delta_ij| <= eps.
inline std::vector<std::pair<double, double>> orbit_bounds(const Vector& v, double eps) {
  require(eps >= 0.0 && eps <= 1.0, "invalid_epsilon", "orbit_bounds needs eps in [0, 1]");
  const double alpha = v.minCoeff(), beta = v.maxCoeff();
  std::vector<std::pair<double, double>> out;
  for (Index i = 0; i < v.size(); ++i) out.emplace_back(v[i] + eps * (alpha - v[i]), v[i] + eps * (beta - v[i]));
  return out;
}

struct TransportResult {
  StochasticMatrix T = StochasticMatrix::identity(2);
  double t = 1.0;
  double epsilon_in = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  std::vector<double> theta;  // weight on the argmin coordinate, per row
  double max_deviation = 0.0;  // max |T_ij - delta_ij|
};

namespace detail {

inline void check_unit_normal(const Vector& v, const char* name) {
  const double n = static_cast<double>(v.size());
  if (std::abs(v.norm() - 1.0) > 1e-12 || std::abs(v.sum() / std::sqrt(n)) > 1e-12) {
    std::ostringstream os;
    os << name << " must be a unit vector orthogonal to u (norm " << v.norm() << ", u-component "
       << v.sum() / std::sqrt(n) << ")";
    fail_validation("not_unit_normal", os.str());
  }
}

inline std::pair<Index, Index> extreme_indices(const Vector& v) {
  Index lo = 0, hi = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i] < v[lo]) lo = i;
    if (v[i] > v[hi]) hi = i;
  }
  return {lo, hi};
}

inline double max_deviation(const Matrix& t) {
  return (t - Matrix::Identity(t.rows(), t.cols())).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// T in S_{delta2} and t with T v = t w, for unit v, w in N with |v - w| <= eps.
inline TransportResult transport(const Vector& v, const Vector& w, double eps) {
  require(v.size() == w.size() && v.size() >= 2, "dimension_mismatch", "transport needs equal lengths >= 2");
  detail::check_unit_normal(v, "v");
  detail::check_unit_normal(w, "w");
  require(eps >= 0.0, "invalid_epsilon", "eps must be nonnegative");
  const double dist = (v - w).norm();
  if (dist > eps + 1e-15) {
    std::ostringstream os;
    os << "|v - w| = " << dist << " exceeds eps = " << eps;
    fail_validation("too_far", os.str());
  }
  const Index n = v.size();
  const TransportConstants k(n);
  TransportResult out;
  out.epsilon_in = eps;
  out.delta1 = std::sqrt(eps);
  out.delta2 = k.C * out.delta1;
  if (out.delta2 > 1.0) {
    std::ostringstream os;
    os << "delta2 = C sqrt(eps) = " << out.delta2 << " exceeds 1";
    fail_validation("epsilon_too_large", os.str());
  }
  const auto [jmin, jmax] = detail::extreme_indices(v);
  const double alpha = v[jmin], beta = v[jmax];
  if (!(beta > alpha)) fail_numerical("degenerate_vector", "v has equal extreme coordinates");
  const double big = std::max(beta, std::abs(alpha));
  const double gap = (out.delta1 + eps) / (big + eps);
  out.t = 1.0 - gap;
  out.theta.assign(static_cast<std::size_t>(n), 0.0);
  if (out.delta2 == 0.0) {
    out.T = StochasticMatrix::identity(n);
    return out;
  }
  // Target of the two-point mix in row i, rearranged to avoid cancellation:
  // r_i = v_i + (t w_i - v_i) / delta2.
  const double shrink = (1.0 + out.delta1) / (k.C * (big + eps));
  // Diagonal weight rounded up so that 1 - keep never exceeds delta2.
  double keep = 1.0 - out.delta2;
  while (1.0 - keep > out.delta2) keep = std::nextafter(keep, 2.0);
  const double mass = 1.0 - keep;
  Matrix t = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double r = v[i] + out.t * (w[i] - v[i]) / out.delta2 - shrink * v[i];
    double th = (beta - r) / (beta - alpha);
    if (th < -1e-10 || th > 1.0 + 1e-10) {
      std::ostringstream os;
      os << "row " << i << " needs mix weight " << th << " outside [0, 1]";
      fail_numerical("orbit_violation", os.str());
    }
    th = std::clamp(th, 0.0, 1.0);
    out.theta[static_cast<std::size_t>(i)] = th;
    t(i, i) += keep;
    t(i, jmin) += mass * th;
    t(i, jmax) += mass * (1.0 - th);
  }
  out.T = StochasticMatrix::from(t);
  out.max_deviation = detail::max_deviation(t);
  return out;
}

/// T y = t x with the smallest max_i |T_ii - 1| over all t in (0, t_max],
/// each row moving mass to one extreme coordinate of y.
inline TransportResult minimal_transport(const Vector& y, const Vector& x) {
  require(y.size() == x.size(), "dimension_mismatch", "minimal_transport needs equal lengths");
  const Index n = y.size();
  const auto [jmin, jmax] = detail::extreme_indices(y);
  const double alpha = y[jmin], beta = y[jmax];
  if (!(beta > alpha)) fail_numerical("degenerate_vector", "y has equal extreme coordinates");

  // Row i needs delta_i(t) = max(up_i(t), down_i(t)), each linear in t; rows
  // sitting at an extreme only bound t.
  struct Line {
    double a, b;  // a + b t
  };
  std::vector<Line> lines;
  double t_max = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    if (y[i] < beta) lines.push_back({-y[i] / (beta - y[i]), x[i] / (beta - y[i])});
    else if (x[i] > 0) t_max = std::min(t_max, y[i] / x[i]);
    if (y[i] > alpha) lines.push_back({y[i] / (y[i] - alpha), -x[i] / (y[i] - alpha)});
    else if (x[i] < 0) t_max = std::min(t_max, y[i] / x[i]);
  }
  if (!(t_max > 0.0) || !std::isfinite(t_max)) fail_numerical("no_transport", "no positive scale is feasible");
  auto cost = [&](double t) {
    double c = 0.0;
    for (const auto& l : lines) c = std::max(c, l.a + l.b * t);
    return c;
  };
  double best_t = t_max, best = cost(t_max);
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const double db = lines[i].b - lines[j].b;
      if (db == 0.0) continue;
      const double t = (lines[j].a - lines[i].a) / db;
      if (!(t > 0.0 && t <= t_max)) continue;
      const double c = cost(t);
      if (c < best) {
        best = c;
        best_t = t;
      }
    }

  TransportResult out;
  out.t = best_t;
  out.theta.assign(static_cast<std::size_t>(n), 0.0);
  Matrix t = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    const double target = best_t * x[i];
    if (target > y[i] && y[i] < beta) {
      const double d = std::min(1.0, (target - y[i]) / (beta - y[i]));
      t(i, i) -= d;
      t(i, jmax) += d;
    } else if (target < y[i] && y[i] > alpha) {
      const double d = std::min(1.0, (y[i] - target) / (y[i] - alpha));
      t(i, i) -= d;
      t(i, jmin) += d;
      out.theta[static_cast<std::size_t>(i)] = 1.0;
    }
  }
  out.T = StochasticMatrix::renormalized(t);
  out.max_deviation = detail::max_deviation(out.T.matrix());
  out.delta2 = out.max_deviation;
  return out;
}

struct AccessResult {
  StochasticMatrix R = StochasticMatrix::identity(2);
  double lambda = 1.0;
  TransportResult carrier;
  bool flipped = false;    // y was replaced by -y
  bool tightened = false;  // minimal transport replaced the constructive one
  double bound = 0.0;      // |S| |I - T|
  double distance = 0.0;   // |S - R|
  double residual = 0.0;   // |S x - lambda R y|
};

/// R = S T with S x = lambda R y and |S - R| <= eps, for unit x, y in N at
/// angle at most eps^2 / C^2.
inline AccessResult access(const StochasticMatrix& s, const Vector& x, const Vector& y, double eps) {
  const Index n = s.size();
  require(x.size() == n && y.size() == n, "dimension_mismatch", "access vectors must match S");
  detail::check_unit_normal(x, "x");
  detail::check_unit_normal(y, "y");
  require(eps > 0.0, "invalid_epsilon", "access needs eps > 0");
  const TransportConstants k(n);
  const double admissible = eps * eps / (k.C * k.C);
  const double cosine = std::clamp(std::abs(x.dot(y)), 0.0, 1.0);
  const double ang = std::atan2((y - x.dot(y) * x).norm(), cosine);
  if (ang > admissible) {
    std::ostringstream os;
    os << "angle(x, y) = " << ang << " exceeds eps^2 / C^2 = " << admissible;
    fail_validation("angle_precondition", os.str());
  }

  AccessResult out;
  out.flipped = x.dot(y) < 0.0;
  const Vector yy = out.flipped ? Vector(-y) : y;
  // |x - y| <= angle, and eps_in = eps^2 / C^2 makes delta2 = eps.
  out.carrier = transport(yy, x, admissible);
  const double s_norm = operator_norm(s.matrix());
  auto bound_of = [&](const TransportResult& tr) {
    return s_norm * operator_norm(Matrix::Identity(n, n) - tr.T.matrix());
  };
  out.bound = bound_of(out.carrier);
  if (out.bound > eps) {
    TransportResult tight = minimal_transport(yy, x);
    tight.epsilon_in = admissible;
    const double b = bound_of(tight);
    if (b < out.bound) {
      out.carrier = std::move(tight);
      out.bound = b;
      out.tightened = true;
    }
  }
  if (out.bound > eps * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "|S| |I - T| = " << out.bound << " exceeds eps = " << eps << " even after tightening";
    fail_numerical("eps_unreachable", os.str());
  }
  out.R = s * out.carrier.T;
  out.lambda = (out.flipped ? -1.0 : 1.0) / out.carrier.t;
  out.distance = operator_norm(s.matrix() - out.R.matrix());
  out.residual = (s.matrix() * x - out.lambda * (out.R.matrix() * y)).norm();
  return out;
}

/// Rows (1 - eta_i) e_i + eta_i q_i with eta_i uniform in [0, eps] and q_i
/// uniform on the simplex.
inline StochasticMatrix sample_s_epsilon(Index n, double eps, Rng& rng) {
  require(n >= 2, "invalid_dimension", "n must be at least 2");
  require(eps >= 0.0 && eps <= 1.0, "invalid_epsilon", "eps must lie in [0, 1]");
  Matrix m = Matrix::Identity(n, n);
  for (Index i = 0; i < n; ++i) {
    const double eta = eps * rng.uniform();
    m.row(i) = (1.0 - eta) * m.row(i) + eta * rng.dirichlet(n).transpose();
  }
  return StochasticMatrix::renormalized(m);
}

/// Uniform unit vector in N.
inline Vector random_unit_normal(Index n, Rng& rng) {
  const ProjectionPair p(n);
  const Vector v = project(p, Projection::Q, rng.gaussian(n));
  return v / v.norm();
}

/// Unit vector in N at angle phi from the unit vector v in N; v itself when N
/// is a line.
inline Vector rotate_in_normal(const Vector& v, double phi, Rng& rng) {
  if (v.size() == 2) return v;
  const ProjectionPair p(v.size());
  Vector z = project(p, Projection::Q, rng.gaussian(v.size()));
  z -= z.dot(v) * v;
  z /= z.norm();
  return std::cos(phi) * v + std::sin(phi) * z;
}

}  // namespace stochdom
