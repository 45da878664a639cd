#pragma once

// The isotopy S -> P + rho (S - P) toward the rank-one projection, its power
// series, the graph map sigma as a series in rho, and the exponent shift.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lyapunov.hpp"

namespace stochdom {

inline void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    std::ostringstream os;
    os << "rho = " << rho << " outside [0, 1]";
    fail_validation("invalid_rho", os.str());
  }
}

/// (1 - rho) * (all 1/n) + rho * S; exact at rho = 0 and rho = 1.
inline StochasticMatrix deform(const StochasticMatrix& s, double rho) {
  check_rho(rho);
  const Index n = s.size();
  const Matrix m = (1.0 - rho) * Matrix::Constant(n, n, 1.0 / static_cast<double>(n)) + rho * s.matrix();
  return StochasticMatrix::from(m);
}

/// P + rho (P S Q + Q S Q), the projection form of the same matrix.
inline Matrix deform_projected(const StochasticMatrix& s, double rho) {
  check_rho(rho);
  const ProjectionPair p(s.size());
  return p.P() + rho * (p.P() * s.matrix() * p.Q() + p.Q() * s.matrix() * p.Q());
}

/// Applies deform to every generator matrix.
inline CocycleSpec deform(const CocycleSpec& c, double rho) {
  check_rho(rho);
  return c.map_matrices([rho](const Matrix& m) { return deform(StochasticMatrix::from(m), rho).matrix(); });
}

struct LipschitzCheck {
  double lhs = 0.0;    // |S^(rho) - T^(rho')|
  double bound = 0.0;  // |rho - rho'| + rho' |S - T|
  double sharp = 0.0;  // |rho - rho'| |S - P| + rho' |S - T|
  bool holds() const { return lhs <= bound + 1e-12; }
};

inline LipschitzCheck lipschitz_check(const StochasticMatrix& s, const StochasticMatrix& t, double rho,
                                      double rho_prime) {
  require(s.size() == t.size(), "dimension_mismatch", "lipschitz_check needs equal sizes");
  LipschitzCheck out;
  out.lhs = operator_norm(deform(s, rho).matrix() - deform(t, rho_prime).matrix());
  const double dst = operator_norm(s.matrix() - t.matrix());
  out.bound = std::abs(rho - rho_prime) + rho_prime * dst;
  out.sharp = std::abs(rho - rho_prime) * operator_norm(s.matrix() - ProjectionPair(s.size()).P()) + rho_prime * dst;
  return out;
}

struct PowerSeries {
  Matrix series;  // sum_{k<=n} rho^k P (SQ)^k + rho^n S-hat^n
  Matrix direct;  // deform(S, rho)^n
  double defect = 0.0;
};

inline PowerSeries deformed_power(const StochasticMatrix& s, double rho, std::size_t n) {
  check_rho(rho);
  const Index d = s.size();
  const ProjectionPair p(d);
  const Matrix sq = s.matrix() * p.Q();
  PowerSeries out;
  out.series = Matrix::Zero(d, d);
  Matrix term = Matrix::Identity(d, d);  // (SQ)^k
  double rk = 1.0;
  for (std::size_t k = 0; k <= n; ++k) {
    out.series += rk * p.P() * term;
    if (k < n) {
      term = sq * term;
      rk *= rho;
    }
  }
  Matrix normal = p.Q();  // S-hat^0 = Q
  const Matrix hat = p.Q() * s.matrix() * p.Q();
  for (std::size_t k = 0; k < n; ++k) normal = hat * normal;
  out.series += std::pow(rho, static_cast<double>(n)) * normal;
  const Matrix step = deform(s, rho).matrix();
  out.direct = Matrix::Identity(d, d);
  for (std::size_t k = 0; k < n; ++k) out.direct = step * out.direct;
  out.defect = (out.series - out.direct).cwiseAbs().maxCoeff();
  return out;
}

struct SigmaSeries {
  double value = 0.0;  // u-coefficient of the graph over Qv
  std::size_t terms = 0;
  double max_coefficient = 0.0;  // max |a_k| over the terms used
  double truncation_bound = 0.0;
};

inline std::size_t default_series_terms(double rho) {
  const double k = std::ceil(std::log(1e-12 * (1.0 - rho)) / std::log(rho));
  return static_cast<std::size_t>(std::clamp(k, 1.0, 1e5));
}

/// sigma^(rho)(Qv) = -sum_{k>=1} a_k rho^k with a_k = u^T (SQ)^k v.
inline SigmaSeries sigma_series(const StochasticMatrix& s, double rho, const Vector& v,
                                std::optional<std::size_t> terms = std::nullopt) {
  check_rho(rho);
  if (!(rho > 0.0 && rho < 1.0)) {
    std::ostringstream os;
    os << "sigma series needs 0 < rho < 1, got " << rho;
    fail_validation("invalid_rho", os.str());
  }
  require(v.size() == s.size(), "dimension_mismatch", "sigma_series vector length");
  const ProjectionPair p(s.size());
  const Matrix sq = s.matrix() * p.Q();
  SigmaSeries out;
  out.terms = terms.value_or(default_series_terms(rho));
  Vector w = v;
  double rk = 1.0;
  for (std::size_t k = 1; k <= out.terms; ++k) {
    w = sq * w;
    rk *= rho;
    const double a = p.u().dot(w);
    out.max_coefficient = std::max(out.max_coefficient, std::abs(a));
    out.value -= a * rk;
  }
  out.truncation_bound = out.max_coefficient * std::pow(rho, static_cast<double>(out.terms + 1)) / (1.0 - rho);
  return out;
}

/// Phi^rho(v) = Qv + sigma^(rho)(Qv) u, the deformed invariant vector over Qv.
inline Vector phi_rho(const StochasticMatrix& s, double rho, const Vector& v,
                      std::optional<std::size_t> terms = std::nullopt) {
  const ProjectionPair p(s.size());
  return project(p, Projection::Q, v) + sigma_series(s, rho, v, terms).value * p.u();
}

struct ShiftRow {
  double original = 0.0;  // lambda
  double expected = 0.0;  // lambda + log rho
  double deformed = 0.0;
  double error = 0.0;
};

struct ShiftTable {
  double rho = 1.0;
  std::vector<ShiftRow> rows;  // one per negative exponent group
  double max_error = 0.0;
  bool zero_preserved = true;  // top group stays {0} with multiplicity 1 iff it was
  double zero_subspace_distance = 0.0;
};

/// Compares the exact periodic spectra of c and deform(c, rho).
inline ShiftTable exponent_shift_check(const CocycleSpec& c, double rho) {
  check_rho(rho);
  if (!(rho > 0.0)) fail_validation("invalid_rho", "exponent shift needs rho > 0");
  const auto base = lyapunov_periodic(c);
  const auto moved = lyapunov_periodic(deform(c, rho));
  ShiftTable out;
  out.rho = rho;
  const auto& g0 = base.report.groups;
  const auto& g1 = moved.report.groups;
  out.zero_preserved = std::abs(g1.front().value) <= 1e-8 && g1.front().multiplicity == g0.front().multiplicity;
  out.zero_subspace_distance =
      g0.front().multiplicity == g1.front().multiplicity
          ? subspace_distance(base.estimates.front().subspaces.front(), moved.estimates.front().subspaces.front())
          : 1.0;
  const double shift = std::log(rho);
  // Each negative group against the deformed value in the same direction slot.
  std::size_t slot = g0.front().multiplicity;
  for (std::size_t g = 1; g < g0.size(); slot += g0[g].multiplicity, ++g) {
    ShiftRow row;
    row.original = g0[g].value;
    row.expected = g0[g].neg_inf ? kNegInf : g0[g].value + shift;
    row.deformed = moved.report.raw[slot];
    const bool both_inf = g0[g].neg_inf && row.deformed == kNegInf;
    row.error = both_inf ? 0.0 : std::abs(row.deformed - row.expected);
    if (std::isnan(row.error)) row.error = std::numeric_limits<double>::infinity();
    out.max_error = std::max(out.max_error, row.error);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace stochdom
