#pragma once

// Dominated splittings: ratio certificates, the graph transform that lifts a
// normal splitting to the full cocycle, and the contracting special case.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lyapunov.hpp"

namespace stochdom {

/// F^1 + ... + F^k, strongest first.
struct Splitting {
  std::vector<Subspace> parts;

  Index ambient_dim() const { return parts.empty() ? 0 : parts.front().ambient_dim(); }
  std::vector<Index> dims() const {
    std::vector<Index> d;
    for (const auto& p : parts) d.push_back(p.dim());
    return d;
  }
  Matrix stacked() const {
    Index cols = 0;
    for (const auto& p : parts) cols += p.dim();
    Matrix m(ambient_dim(), cols);
    Index at = 0;
    for (const auto& p : parts) {
      m.middleCols(at, p.dim()) = p.basis();
      at += p.dim();
    }
    return m;
  }
  /// Stacked basis of parts [from, to).
  Matrix block(std::size_t from, std::size_t to) const {
    Index cols = 0;
    for (std::size_t i = from; i < to; ++i) cols += parts[i].dim();
    Matrix m(ambient_dim(), cols);
    Index at = 0;
    for (std::size_t i = from; i < to; ++i) {
      m.middleCols(at, parts[i].dim()) = parts[i].basis();
      at += parts[i].dim();
    }
    return m;
  }
  void validate(Index n) const {
    require(parts.size() >= 2, "invalid_splitting", "a splitting needs at least two parts");
    Index total = 0;
    for (const auto& p : parts) {
      require(p.ambient_dim() == n, "dimension_mismatch", "splitting part in the wrong ambient space");
      total += p.dim();
    }
    require(total == n, "invalid_splitting",
            "part dimensions sum to " + std::to_string(total) + ", expected " + std::to_string(n));
    const Vector s = singular_values(stacked());
    if (s[s.size() - 1] <= 1e-10 * s[0]) fail_validation("invalid_splitting", "parts are not in direct sum");
  }
};

/// Splittings tabulated over base points, in insertion order.
class SplittingField {
 public:
  void set(const BasePoint& x, Splitting s) {
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (points_[i] == x) {
        values_[i] = std::move(s);
        return;
      }
    points_.push_back(x);
    values_.push_back(std::move(s));
  }
  const Splitting* find(const BasePoint& x) const {
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (points_[i] == x) return &values_[i];
    return nullptr;
  }
  const Splitting& at(const BasePoint& x) const {
    const Splitting* s = find(x);
    if (!s) fail_validation("missing_point", "no splitting stored at " + describe(x));
    return *s;
  }
  const std::vector<BasePoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<BasePoint> points_;
  std::vector<Splitting> values_;
};

namespace detail {

/// S^m B carried as an orthonormal frame times an accumulated triangular
/// factor, so deep contraction keeps relative accuracy.
class RestrictedIterate {
 public:
  explicit RestrictedIterate(const Matrix& basis)
      : frame_(basis), factor_(Matrix::Identity(basis.cols(), basis.cols())) {}

  /// Returns false when S kills a direction of the current image.
  bool step(const Matrix& s) {
    const Matrix w = s * frame_;
    const Eigen::HouseholderQR<Matrix> qr(w);
    const Index d = w.cols();
    const Matrix r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    frame_ = qr.householderQ() * Matrix::Identity(w.rows(), d);
    factor_ = r * factor_;
    const double lo = singular_values(r).minCoeff();
    return lo > 1e-12 * std::max(operator_norm(s), std::numeric_limits<double>::min());
  }
  double norm() const { return operator_norm(factor_); }
  double co_norm() const {
    const Matrix inv =
        factor_.triangularView<Eigen::Upper>().solve(Matrix::Identity(factor_.rows(), factor_.cols()));
    return 1.0 / operator_norm(inv);
  }

 private:
  Matrix frame_, factor_;
};

/// Per-cut iterates of one splitting along an orbit.
class CutRatios {
 public:
  CutRatios(const Splitting& split, const BasePoint& x) : x_(x) {
    for (std::size_t cut = 1; cut < split.parts.size(); ++cut) {
      f1_.emplace_back(split.block(0, cut));
      f2_.emplace_back(split.block(cut, split.parts.size()));
    }
  }
  void step(const CocycleSpec& c) {
    const Matrix s = c.at(x_);
    for (std::size_t i = 0; i < f1_.size(); ++i) {
      if (!f1_[i].step(s)) {
        std::ostringstream os;
        os << "S restricted to the image of F1 (cut " << i + 1 << ") is singular after " << steps_ + 1
           << " steps";
        fail_numerical("kernel_meets_F1", os.str());
      }
      f2_[i].step(s);
    }
    x_ = c.base().forward(x_);
    ++steps_;
  }
  std::size_t cuts() const { return f1_.size(); }
  double ratio(std::size_t i) const { return f2_[i].norm() / f1_[i].co_norm(); }

 private:
  BasePoint x_;
  std::size_t steps_ = 0;
  std::vector<RestrictedIterate> f1_, f2_;
};

inline std::size_t checked_cut(const Splitting& split, std::size_t cut) {
  require(cut >= 1 && cut < split.parts.size(), "invalid_cut",
          "cut " + std::to_string(cut) + " for a splitting with " + std::to_string(split.parts.size()) + " parts");
  return cut;
}

}  // namespace detail

/// |S^m_x restricted to F2| / m(S^m_x restricted to F1), F1 the first `cut` parts.
inline double domination_ratio(const CocycleSpec& c, const Splitting& split, const BasePoint& x, std::size_t m,
                               std::size_t cut = 1) {
  require(m >= 1, "invalid_m", "domination ratio needs m >= 1");
  split.validate(c.dim());
  detail::CutRatios it(split, x);
  for (std::size_t k = 0; k < m; ++k) it.step(c);
  return it.ratio(detail::checked_cut(split, cut) - 1);
}

struct SupInf {
  double lhs = 0.0;  // norm over co-norm of the restricted iterates, from the SVD
  double rhs = 0.0;  // sup over F2 / inf over F1 via Gram and triangular factors
};

inline SupInf supinf_identity_check(const CocycleSpec& c, const Splitting& split, const BasePoint& x, std::size_t m,
                                    std::size_t cut = 1) {
  require(m >= 1, "invalid_m", "domination ratio needs m >= 1");
  split.validate(c.dim());
  detail::checked_cut(split, cut);
  SupInf out;
  const Matrix s = iterate(c, x, m);
  const Matrix f1 = s * split.block(0, cut);
  const Matrix f2 = s * split.block(cut, split.parts.size());
  out.lhs = operator_norm(f2) / singular_values(f1).minCoeff();
  // sup_{w in F2} |S w| / |w|: square root of the largest Gram eigenvalue.
  const Matrix gram = f2.transpose() * f2;
  const double sup = std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly)
                                                 .eigenvalues()
                                                 .maxCoeff()));
  // inf_{v in F1} |S v| / |v| = 1 / |R^{-1}| with S B1 = QR.
  const Eigen::HouseholderQR<Matrix> qr(f1);
  const Matrix r = qr.matrixQR().topRows(f1.cols()).triangularView<Eigen::Upper>();
  const Matrix rinv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(r.rows(), r.cols()));
  const double rinv_norm = std::sqrt(
      Eigen::SelfAdjointEigenSolver<Matrix>(rinv.transpose() * rinv, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
  out.rhs = sup * rinv_norm;
  return out;
}

struct DominationCertificate {
  bool valid = false;
  std::size_t m = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  std::vector<double> per_point_ratios;  // worst cut at each sample point, at m
  std::vector<double> per_cut_ratios;    // worst point for each cut, at m
  std::vector<double> worst_by_m;        // worst ratio at each scanned m
  std::vector<BasePoint> points;
  std::vector<Index> splitting_dims;
  double invariance_residual = 0.0;
  std::string sample_description;
};

inline constexpr double kDominationThreshold = 0.5 + 1e-12;

namespace detail {

/// Largest relative defect of S_x F^i_x inside F^i_{f(x)} over points whose
/// image is also tabulated.
inline double invariance_residual(const CocycleSpec& c, const SplittingField& field,
                                  const std::vector<BasePoint>& sample) {
  double worst = 0.0;
  for (const auto& x : sample) {
    const Splitting* next = field.find(c.base().forward(x));
    if (!next) continue;
    const Splitting& here = field.at(x);
    const Matrix s = c.at(x);
    for (std::size_t i = 0; i < here.parts.size(); ++i) {
      const Matrix image = s * here.parts[i].basis();
      const double size = operator_norm(image);
      if (size > 0) worst = std::max(worst, containment_defect(image, next->parts[i]) / size);
    }
  }
  return worst;
}

inline DominationCertificate scan_ratios(const CocycleSpec& c, const SplittingField& field,
                                         const std::vector<BasePoint>& sample, std::size_t m_from,
                                         std::size_t m_step, std::size_t m_max) {
  const Index n = c.dim();
  const std::size_t k = field.at(sample.front()).parts.size();
  for (const auto& x : sample)
    require(field.at(x).parts.size() == k, "invalid_splitting", "splittings differ in part count");
  for (const auto& x : sample) field.at(x).validate(n);
  DominationCertificate best;
  best.points = sample;
  best.splitting_dims = field.at(sample.front()).dims();

  std::vector<CutRatios> iters;
  for (const auto& x : sample) iters.emplace_back(field.at(x), x);
  std::size_t m = 0;
  auto advance_to = [&](std::size_t target) {
    for (; m < target; ++m)
      for (auto& it : iters) it.step(c);
  };
  for (std::size_t target = m_from; target <= m_max; target += m_step) {
    advance_to(target);
    DominationCertificate cur = best;
    cur.m = target;
    cur.per_point_ratios.assign(sample.size(), 0.0);
    cur.per_cut_ratios.assign(k - 1, 0.0);
    cur.worst_ratio = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      for (std::size_t cut = 1; cut < k; ++cut) {
        const double r = iters[i].ratio(cut - 1);
        cur.per_point_ratios[i] = std::max(cur.per_point_ratios[i], r);
        cur.per_cut_ratios[cut - 1] = std::max(cur.per_cut_ratios[cut - 1], r);
      }
      cur.worst_ratio = std::max(cur.worst_ratio, cur.per_point_ratios[i]);
    }
    best.worst_by_m.push_back(cur.worst_ratio);
    cur.worst_by_m = best.worst_by_m;
    if (cur.worst_ratio <= kDominationThreshold) {
      cur.valid = true;
      return cur;
    }
    if (best.m == 0 || cur.worst_ratio < best.worst_ratio) best = cur;
    best.worst_by_m = cur.worst_by_m;
  }
  return best;
}

}  // namespace detail

/// Smallest m <= m_max at which every coarsening cut has ratio <= 1/2 at
/// every sample point. An invalid certificate carries the best m found.
inline DominationCertificate certify_domination(const CocycleSpec& c, const SplittingField& field,
                                                const std::vector<BasePoint>& sample, std::size_t m_max) {
  require(!sample.empty(), "invalid_sample", "certify_domination needs sample points");
  require(m_max >= 1, "invalid_m", "m_max must be positive");
  const double residual = detail::invariance_residual(c, field, sample);
  if (residual > c.tolerances().invariance) {
    std::ostringstream os;
    os << "splitting invariance defect " << residual << " above " << c.tolerances().invariance;
    fail_numerical("not_invariant", os.str());
  }
  DominationCertificate cert = detail::scan_ratios(c, field, sample, 1, 1, m_max);
  cert.invariance_residual = residual;
  std::ostringstream os;
  os << sample.size() << " points from " << describe(sample.front());
  cert.sample_description = os.str();
  return cert;
}

// ---------------------------------------------------------------------------
// Graph transform

/// sigma_x : N2_x -> uR over an orbit; F2_x = {v + sigma_x(v) u : v in N2_x}.
struct SigmaField {
  std::vector<BasePoint> points;
  std::vector<Matrix> n2;     // n x k orthonormal bases inside N
  std::vector<Matrix> sigma;  // 1 x k, in n2 coordinates
  std::size_t m_hat = 1;
  std::size_t iterations = 0;
  std::vector<double> increments;  // largest change of any sigma_x per iteration
  double contraction = 0.0;        // sup |Q S^m_hat restricted to N2|
  double residual = 0.0;           // fixed-point defect of the m_hat map
  double invariance = 0.0;         // one-step defect of S F2 inside F2
  std::size_t trusted = 0;         // leading points whose sigma is exact to round-off
  bool periodic = false;

  Matrix graph_basis(std::size_t i, const ProjectionPair& p) const { return n2[i] + p.u() * sigma[i]; }
};

/// Fixed point of sigma_x = sigma_{f^m(x)} o Q S^m_x - u^T S^m_x over N2, by
/// Jacobi iteration from sigma = 0. `points` is an orbit; if `periodic`, it
/// is a full cycle and indices wrap, otherwise sigma is taken as 0 past the
/// end and only a prefix is trusted.
inline SigmaField solve_sigma(const CocycleSpec& c, const std::vector<BasePoint>& points,
                              const std::vector<Subspace>& n2, std::size_t m_hat, bool periodic) {
  require(m_hat >= 1, "invalid_m", "m_hat must be positive");
  require(!points.empty() && points.size() == n2.size(), "invalid_sample", "one N2 subspace per orbit point");
  const Index n = c.dim();
  const ProjectionPair proj(n);
  const Tolerances& tol = c.tolerances();
  const std::size_t len = points.size();
  const Index k = n2.front().dim();
  for (const auto& s : n2) {
    require(s.ambient_dim() == n && s.dim() == k, "dimension_mismatch", "N2 subspaces must share a dimension");
    require(operator_norm(proj.u().transpose() * s.basis()) < 1e-10, "invalid_subspace", "N2 must lie inside N");
  }

  auto target = [&](std::size_t i) -> std::optional<std::size_t> {
    if (periodic) return (i + m_hat) % len;
    if (i + m_hat < len) return i + m_hat;
    return std::nullopt;
  };

  SigmaField out;
  out.points = points;
  out.m_hat = m_hat;
  out.periodic = periodic;
  for (const auto& s : n2) out.n2.push_back(s.basis());

  // Coefficients of the map: K_i in N2 coordinates, p_i = u^T S^m N2_i.
  std::vector<Matrix> kmat(len), pvec(len);
  double contraction = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const Matrix sm = iterate(c, points[i], m_hat);
    const Matrix qs = proj.Q() * sm * out.n2[i];
    contraction = std::max(contraction, operator_norm(qs));
    pvec[i] = proj.u().transpose() * sm * out.n2[i];
    const auto t = target(i);
    // Past the end of a non-periodic orbit the image subspace is unknown;
    // sigma there is 0, so K is unused.
    kmat[i] = t ? Matrix(out.n2[*t].transpose() * qs) : Matrix::Zero(k, k);
  }
  out.contraction = contraction;
  if (contraction > 0.5 + 1e-12) {
    std::ostringstream os;
    os << "sup |Q S^" << m_hat << " restricted to N2| = " << contraction << " exceeds 1/2";
    fail_numerical("not_contracting", os.str());
  }

  std::vector<Matrix> sigma(len, Matrix::Zero(1, k)), next(len);
  for (std::size_t it = 1;; ++it) {
    double inc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const auto t = target(i);
      next[i] = -pvec[i];
      if (t) next[i] += sigma[*t] * kmat[i];
      inc = std::max(inc, (next[i] - sigma[i]).norm());
    }
    sigma.swap(next);
    out.increments.push_back(inc);
    out.iterations = it;
    if (inc <= tol.fixed_point) break;
    if (it >= tol.max_fixed_point_iterations) {
      std::ostringstream os;
      os << "graph transform increment " << inc << " after " << it << " iterations";
      fail_numerical("no_fixed_point", os.str());
    }
  }
  out.sigma = sigma;

  for (std::size_t i = 0; i < len; ++i) {
    Matrix want = -pvec[i];
    if (const auto t = target(i)) want += sigma[*t] * kmat[i];
    out.residual = std::max(out.residual, (want - sigma[i]).norm());
  }

  // Points whose chain reaches the end have error ~ contraction^steps.
  if (periodic) {
    out.trusted = len;
  } else {
    const double per = std::max(contraction, 1e-300);
    const double needed = per < 1.0 ? std::ceil(std::log(1e-16) / std::log(per)) : 0.0;
    const std::size_t guard = static_cast<std::size_t>(needed) * m_hat;
    out.trusted = len > guard ? len - guard : 0;
  }

  // One-step ambient invariance of the graphs.
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t j = i + 1;
    if (j == len) {
      if (!periodic) break;
      j = 0;
    }
    if (!periodic && j >= out.trusted) break;
    const Matrix image = c.at(points[i]) * out.graph_basis(i, proj);
    const double size = operator_norm(image);
    if (size > 0)
      out.invariance =
          std::max(out.invariance, containment_defect(image, Subspace::span(out.graph_basis(j, proj))) / size);
  }
  return out;
}

struct LiftResult {
  SplittingField field;
  SigmaField sigma;
  DominationCertificate certificate;
  double angle_constant = 0.0;  // max 1 / sin angle(u, F2)
  double min_angle = 0.0;       // min angle(u, F2) over the sample
  std::size_t m_theory = 0;
};

/// F1 = uR + N1, F2 = graph(sigma) over N2, certified for S. `points` is an
/// orbit (a full cycle when `periodic`).
inline LiftResult lift_splitting(const CocycleSpec& c, const std::vector<BasePoint>& points,
                                 const std::vector<Subspace>& n1, const std::vector<Subspace>& n2, std::size_t m_hat,
                                 bool periodic, std::size_t m_max = 0) {
  require(n1.size() == points.size(), "invalid_sample", "one N1 subspace per orbit point");
  const ProjectionPair proj(c.dim());
  LiftResult out;
  out.sigma = solve_sigma(c, points, n2, m_hat, periodic);
  const std::size_t usable = out.sigma.trusted;
  if (usable == 0) fail_numerical("orbit_too_short", "no orbit point has a trusted graph transform");

  std::vector<BasePoint> sample(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(usable));
  out.min_angle = std::numbers::pi / 2;
  for (std::size_t i = 0; i < usable; ++i) {
    Matrix f1(c.dim(), 1 + n1[i].dim());
    f1 << proj.u(), n1[i].basis();
    const Subspace f2 = Subspace::span(out.sigma.graph_basis(i, proj));
    const double a = angle(proj.u(), f2);
    out.min_angle = std::min(out.min_angle, a);
    out.angle_constant = std::max(out.angle_constant, 1.0 / std::sin(a));
    out.field.set(points[i], Splitting{{Subspace::span(f1), f2}});
  }

  // Smallest multiple of m_hat with 2C / 2^{m / m_hat} <= 1/2.
  std::size_t blocks = 1;
  while (std::pow(2.0, static_cast<double>(blocks)) < 4.0 * out.angle_constant) ++blocks;
  out.m_theory = blocks * m_hat;
  if (m_max == 0) m_max = out.m_theory + 32 * m_hat;

  const double residual = detail::invariance_residual(c, out.field, sample);
  out.certificate = detail::scan_ratios(c, out.field, sample, out.m_theory, m_hat, std::max(m_max, out.m_theory));
  out.certificate.invariance_residual = residual;
  std::ostringstream os;
  os << usable << " orbit points from " << describe(points.front());
  out.certificate.sample_description = os.str();
  return out;
}

struct ContractingResult {
  LiftResult lift;
  std::size_t m_hat = 1;
  double sup_normal_norm = 0.0;  // sup |S-hat_x|
  double exponent_bound = 0.0;   // log sup |S-hat_x|
  double sharp_bound = 0.0;      // log(sup |S-hat^m_hat|) / m_hat
};

/// E0 = uR and E^{<0} = graph(sigma) over all of N, using the smallest m_hat
/// with sup |S-hat^m_hat| <= 1/2 (m_hat <= m_hat_max). A non-periodic orbit
/// is extended internally so every requested point is trusted.
inline ContractingResult contracting_case(const CocycleSpec& c, const OrbitSegment& seg,
                                          std::size_t m_hat_max = 64) {
  require(seg.length() >= 1, "invalid_sample", "contracting_case needs orbit points");
  const Index n = c.dim();
  const ProjectionPair proj(n);
  const bool periodic = closes(c.base(), seg);

  ContractingResult out;
  for (const auto& x : seg.points)
    out.sup_normal_norm = std::max(out.sup_normal_norm, operator_norm(normal_part(c.at(x), proj).matrix));
  const double floor = c.tolerances().log_floor;
  auto floored = [&](double v) { return v < floor ? kNegInf : v; };
  out.exponent_bound = floored(std::log(out.sup_normal_norm));

  std::optional<std::size_t> found;
  double sup_m = 0.0;
  for (std::size_t m = 1; m <= m_hat_max && !found; ++m) {
    sup_m = 0.0;
    for (const auto& x : seg.points)
      sup_m = std::max(sup_m, operator_norm(iterate_normal(c, proj, x, m).matrix));
    if (sup_m <= 0.5) found = m;
  }
  if (!found) {
    std::ostringstream os;
    os << "sup |S-hat_x| = " << out.sup_normal_norm << "; no m <= " << m_hat_max
       << " has sup |S-hat^m| <= 1/2; deform the cocycle with the perturbation module first";
    fail_numerical("not_contracting", os.str());
  }
  out.m_hat = *found;
  out.sharp_bound = floored(std::log(sup_m) / static_cast<double>(out.m_hat));

  std::vector<BasePoint> pts = seg.points;
  if (!periodic) {
    // Chain length needed for (1/2)^blocks below round-off, plus one step
    // for the invariance check.
    const std::size_t extra = 56 * out.m_hat + 1;
    const OrbitSegment longer = orbit(c.base(), seg.origin(), seg.length() + extra);
    pts = longer.points;
  }
  const std::vector<Subspace> n2(pts.size(), Subspace::from_orthonormal(proj.normal_basis(), 1e-12));

  LiftResult lift;
  lift.sigma = solve_sigma(c, pts, n2, out.m_hat, periodic);
  const std::size_t usable = periodic ? pts.size() : seg.length();
  if (lift.sigma.trusted < usable) fail_numerical("orbit_too_short", "graph transform prefix is not trusted");
  std::vector<BasePoint> sample(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(usable));
  lift.min_angle = std::numbers::pi / 2;
  // One point past the sample so the last sample point's image is tabulated.
  for (std::size_t i = 0; i < pts.size() && i <= usable; ++i) {
    if (!periodic && i >= lift.sigma.trusted) break;
    const Subspace f2 = Subspace::span(lift.sigma.graph_basis(i, proj));
    if (i < usable) {
      const double a = angle(proj.u(), f2);
      lift.min_angle = std::min(lift.min_angle, a);
      lift.angle_constant = std::max(lift.angle_constant, 1.0 / std::sin(a));
    }
    lift.field.set(pts[i], Splitting{{Subspace::line(proj.u()), f2}});
  }
  lift.m_theory = out.m_hat;
  const double residual = detail::invariance_residual(c, lift.field, sample);
  lift.certificate = detail::scan_ratios(c, lift.field, sample, 1, 1, 32 * out.m_hat);
  lift.certificate.invariance_residual = residual;
  std::ostringstream os;
  os << usable << " orbit points from " << describe(seg.origin());
  lift.certificate.sample_description = os.str();
  out.lift = std::move(lift);
  return out;
}

}  // namespace stochdom
