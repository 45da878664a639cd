#pragma once

// Lyapunov spectra of stochastic cocycles: the discrete QR method on long
// orbits, exact eigen-analysis over finite cycles, and bundle estimates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cocycle.hpp"

namespace stochdom {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ExponentGroup {
  double value = 0.0;  // -inf when neg_inf
  bool neg_inf = false;
  std::size_t multiplicity = 1;
};

enum class LyapunovMethod { qr_orbit, periodic_exact };

struct SeriesRecord {
  std::size_t step = 0;
  std::vector<double> estimates;  // running averages, one per frame column
};

struct LyapunovReport {
  std::vector<ExponentGroup> groups;  // descending
  std::vector<double> raw;            // one value per direction, descending
  std::vector<SeriesRecord> series;
  LyapunovMethod method = LyapunovMethod::qr_orbit;
  std::size_t steps = 0;
  bool converged = true;
  std::vector<std::string> warnings;

  double top() const { return groups.front().value; }
  std::size_t point_count() const { return groups.size(); }
  std::size_t dim() const {
    std::size_t d = 0;
    for (const auto& g : groups) d += g.multiplicity;
    return d;
  }
};

/// Sorts descending and chains neighbours closer than `gap` into one group;
/// -inf values form their own group.
inline std::vector<ExponentGroup> group_exponents(std::vector<double> values, double gap) {
  std::sort(values.begin(), values.end(), std::greater<>());
  std::vector<ExponentGroup> out;
  std::vector<double> members;
  auto flush = [&] {
    if (members.empty()) return;
    double mean = 0.0;
    for (double m : members) mean += m;
    out.push_back({mean / static_cast<double>(members.size()), false, members.size()});
    members.clear();
  };
  std::size_t neg_inf = 0;
  for (double v : values) {
    if (v == kNegInf) {
      ++neg_inf;
      continue;
    }
    if (!members.empty() && members.back() - v >= gap) flush();
    members.push_back(v);
  }
  flush();
  if (neg_inf > 0) out.push_back({kNegInf, true, neg_inf});
  return out;
}

inline Matrix random_frame(Index n, Index k, Rng& rng) {
  Matrix g(n, k);
  for (Index j = 0; j < k; ++j) g.col(j) = rng.gaussian(n);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, k);
}

struct QrOptions {
  std::optional<std::size_t> burn_in;  // default L/10
  std::uint64_t seed = 0x5eed;
  std::size_t records = 64;
};

namespace detail {

struct QrState {
  Matrix frame;
  std::vector<double> sums;
  std::vector<bool> collapsed;
};

/// One re-orthonormalization: frame <- qr(block * frame); returns log|R_ii|.
inline std::vector<double> qr_step(QrState& st, const Matrix& block, const Tolerances& tol) {
  const Index k = st.frame.cols();
  Eigen::HouseholderQR<Matrix> qr(block * st.frame);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Matrix q = qr.householderQ() * Matrix::Identity(block.rows(), k);
  double scale = 0.0;
  for (Index i = 0; i < k; ++i) scale = std::max(scale, std::abs(r(i, i)));
  std::vector<double> logs(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const double d = r(i, i);
    if (d < 0) q.col(i) = -q.col(i);
    if (std::abs(d) <= tol.rank * scale) st.collapsed[static_cast<std::size_t>(i)] = true;
    logs[static_cast<std::size_t>(i)] = std::log(std::abs(d));
  }
  st.frame = std::move(q);
  return logs;
}

}  // namespace detail

/// Discrete QR method over any matrix sequence: `next()` yields the next
/// one-step matrix. The first `burn` steps only align the frame.
template <class Next>
LyapunovReport lyapunov_qr_sequence(Index n, Next&& next, std::size_t burn, std::size_t length,
                                    std::size_t stride, const QrOptions& opt, const Tolerances& tol) {
  require(length >= stride && stride >= 1, "invalid_length", "lyapunov_qr needs L >= stride >= 1");
  Rng rng(opt.seed);
  detail::QrState st{random_frame(n, n, rng), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                     std::vector<bool>(static_cast<std::size_t>(n), false)};

  auto run_blocks = [&](std::size_t steps, bool accumulate, LyapunovReport* rep) {
    const std::size_t every = std::max<std::size_t>(1, steps / std::max<std::size_t>(1, opt.records));
    Matrix block = Matrix::Identity(n, n);
    std::size_t pending = 0;
    for (std::size_t s = 1; s <= steps; ++s) {
      block = next() * block;
      if (++pending == stride || s == steps) {
        const auto logs = detail::qr_step(st, block, tol);
        if (accumulate)
          for (std::size_t i = 0; i < logs.size(); ++i)
            if (!st.collapsed[i]) st.sums[i] += logs[i];
        block.setIdentity();
        pending = 0;
      }
      if (accumulate && rep && pending == 0 && (s % every == 0 || s == steps)) {
        SeriesRecord rec{s, {}};
        for (std::size_t i = 0; i < st.sums.size(); ++i)
          rec.estimates.push_back(st.collapsed[i] ? kNegInf : st.sums[i] / static_cast<double>(s));
        rep->series.push_back(std::move(rec));
      }
    }
  };

  LyapunovReport rep;
  rep.method = LyapunovMethod::qr_orbit;
  rep.steps = length;
  run_blocks(burn, false, nullptr);
  run_blocks(length, true, &rep);

  for (std::size_t i = 0; i < st.sums.size(); ++i) {
    double v = st.collapsed[i] ? kNegInf : st.sums[i] / static_cast<double>(length);
    if (v < tol.log_floor) v = kNegInf;
    rep.raw.push_back(v);
  }
  std::sort(rep.raw.begin(), rep.raw.end(), std::greater<>());
  rep.groups = group_exponents(rep.raw, tol.gap);

  if (length < 100) {
    rep.converged = false;
    rep.warnings.push_back("short_orbit: L = " + std::to_string(length) + " < 100");
  }
  // Compare the halfway estimate with the final one.
  if (rep.series.size() >= 2) {
    const auto& mid = rep.series[rep.series.size() / 2];
    const auto& last = rep.series.back();
    std::vector<double> a = mid.estimates, b = last.estimates;
    std::sort(a.begin(), a.end(), std::greater<>());
    std::sort(b.begin(), b.end(), std::greater<>());
    double drift = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::isfinite(a[i]) && std::isfinite(b[i])) drift = std::max(drift, std::abs(a[i] - b[i]));
    if (drift > tol.gap) {
      rep.converged = false;
      std::ostringstream os;
      os << "not_converged: estimates moved by " << drift << " over the second half of the orbit";
      rep.warnings.push_back(os.str());
    }
  }
  return rep;
}

/// QR estimate at x. The frame is first aligned along f^{-B}(x) .. x.
inline LyapunovReport lyapunov_qr(const CocycleSpec& c, const BasePoint& x, std::size_t length,
                                  std::size_t stride = 1, const QrOptions& opt = {}) {
  c.base().validate(x);
  const std::size_t burn = opt.burn_in.value_or(length / 10);
  BasePoint p = c.base().retreat(x, burn);
  auto next = [&] {
    Matrix m = c.at(p);
    p = c.base().forward(p);
    return m;
  };
  return lyapunov_qr_sequence(c.dim(), next, burn, length, stride, opt, c.tolerances());
}

// ---------------------------------------------------------------------------
// Finite cycles

struct OseledetsEstimate {
  BasePoint point;
  std::vector<Subspace> subspaces;  // one per exponent group, same order
  std::vector<double> residuals;    // relative defect of S_x E_i inside E_i(f(x))
  double condition = 1.0;           // of the stacked bases
};

struct PeriodicSpectrum {
  LyapunovReport report;
  std::vector<OseledetsEstimate> estimates;  // one per cycle position
  double max_residual = 0.0;
};

namespace detail {

inline double stacked_condition(const std::vector<Subspace>& parts) {
  Index cols = 0;
  for (const auto& s : parts) cols += s.dim();
  Matrix stacked(parts.front().ambient_dim(), cols);
  Index at = 0;
  for (const auto& s : parts) {
    stacked.middleCols(at, s.dim()) = s.basis();
    at += s.dim();
  }
  const Vector sv = singular_values(stacked);
  const double lo = sv[sv.size() - 1];
  return lo > 0 ? sv[0] / lo : std::numeric_limits<double>::infinity();
}

/// Generalized eigenspace of the group's eigenvalues.
inline Subspace spectral_subspace(const Matrix& m, const Eigen::VectorXcd& eig, const std::vector<int>& label,
                                  int group, Index dim) {
  // Kernel of the group's own factors; conjugate pairs keep the product real.
  const Index n = m.rows();
  Eigen::MatrixXcd prod = Eigen::MatrixXcd::Identity(n, n);
  const Eigen::MatrixXcd mc = m.cast<std::complex<double>>();
  for (Index k = 0; k < eig.size(); ++k)
    if (label[static_cast<std::size_t>(k)] == group)
      prod = (mc - eig[k] * Eigen::MatrixXcd::Identity(n, n)) * prod;
  const Matrix re = prod.real();
  Eigen::JacobiSVD<Matrix> svd(re, Eigen::ComputeFullV);
  return Subspace::from_orthonormal(svd.matrixV().rightCols(dim), 1e-10);
}

}  // namespace detail

/// Exact spectrum over a cycle: cycle[i] is the matrix at the i-th orbit
/// point, so the return map at position i is cycle[i-1] ... cycle[i].
inline PeriodicSpectrum periodic_spectrum(const std::vector<Matrix>& cycle, const std::vector<BasePoint>& points,
                                          const Tolerances& tol = {}) {
  require(!cycle.empty() && cycle.size() == points.size(), "invalid_cycle", "periodic_spectrum needs matrices");
  const std::size_t q = cycle.size();
  const Index n = cycle.front().rows();
  auto return_map = [&](std::size_t i) {
    Matrix m = Matrix::Identity(n, n);
    for (std::size_t k = 0; k < q; ++k) m = cycle[(i + k) % q] * m;
    return m;
  };
  bool singular_factor = false;
  for (const auto& s : cycle)
    if (numerical_rank(s, tol.rank) < n) singular_factor = true;

  // Moduli of the return map at position 0, descending, from the block
  // cyclic matrix whose eigenvalues are q-th roots of the return map's; the
  // roots of small eigenvalues keep far more relative accuracy.
  std::vector<double> refined;
  if (q > 1 && static_cast<std::size_t>(n) * q <= 512) {
    const Index big = n * static_cast<Index>(q);
    Matrix cyc = Matrix::Zero(big, big);
    for (std::size_t i = 0; i < q; ++i) {
      const Index row = static_cast<Index>((i + 1) % q) * n;
      cyc.block(row, static_cast<Index>(i) * n, n, n) = cycle[i];
    }
    std::vector<double> roots;
    const Eigen::VectorXcd nu = Eigen::EigenSolver<Matrix>(cyc, false).eigenvalues();
    for (Index k = 0; k < big; ++k) roots.push_back(std::abs(nu[k]));
    std::sort(roots.begin(), roots.end(), std::greater<>());
    for (Index k = 0; k < n; ++k) {
      double sum = 0.0;
      for (std::size_t j = 0; j < q; ++j) sum += std::log(roots[static_cast<std::size_t>(k) * q + j]);
      refined.push_back(std::exp(sum));  // product of the q roots' moduli
    }
  }

  // Eigenvalues at position 0 sorted by modulus, then labelled into groups.
  struct Labelled {
    Eigen::VectorXcd eig;
    std::vector<int> label;
  };
  auto label_eigs = [&](const Matrix& m, std::vector<double>* exps, std::vector<std::size_t>* sizes) {
    Eigen::EigenSolver<Matrix> es(m, false);
    Eigen::VectorXcd eig = es.eigenvalues();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(eig[a]) > std::abs(eig[b]); });
    Eigen::VectorXcd sorted(n);
    for (Index k = 0; k < n; ++k) sorted[k] = eig[order[static_cast<std::size_t>(k)]];
    const double scale = operator_norm(m);
    std::vector<int> label(static_cast<std::size_t>(n));
    if (sizes) {
      // Defines the group structure.
      int g = -1;
      double prev = 0.0;
      bool prev_inf = false;
      for (Index k = 0; k < n; ++k) {
        const double raw_mod = std::abs(sorted[k]);
        const bool zero = (raw_mod <= tol.rank * scale && singular_factor) || raw_mod == 0.0;
        const double mod = refined.empty() || zero ? raw_mod : refined[static_cast<std::size_t>(k)];
        double e = std::log(mod) / static_cast<double>(q);
        const bool neg_inf = zero || e < tol.log_floor;
        if (neg_inf) e = kNegInf;
        const bool same = g >= 0 && ((neg_inf && prev_inf) ||
                                     (!neg_inf && !prev_inf && std::abs(mod - prev) <= tol.merge * prev));
        if (!same) {
          ++g;
          exps->push_back(e);
          sizes->push_back(0);
        }
        ++(*sizes)[static_cast<std::size_t>(g)];
        label[static_cast<std::size_t>(k)] = g;
        prev = mod;
        prev_inf = neg_inf;
      }
    }
    return Labelled{sorted, label};
  };

  std::vector<double> exps;
  std::vector<std::size_t> sizes;
  label_eigs(return_map(0), &exps, &sizes);

  PeriodicSpectrum out;
  auto& rep = out.report;
  rep.method = LyapunovMethod::periodic_exact;
  rep.steps = q;
  for (std::size_t g = 0; g < exps.size(); ++g) {
    rep.groups.push_back({exps[g], exps[g] == kNegInf, sizes[g]});
    for (std::size_t k = 0; k < sizes[g]; ++k) rep.raw.push_back(exps[g]);
  }

  for (std::size_t i = 0; i < q; ++i) {
    const Matrix m = return_map(i);
    Labelled l = label_eigs(m, nullptr, nullptr);
    // Positions share the nonzero spectrum; reuse the group sizes in modulus order.
    std::size_t k = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g)
      for (std::size_t r = 0; r < sizes[g]; ++r) l.label[k++] = static_cast<int>(g);
    OseledetsEstimate est;
    est.point = points[i];
    for (std::size_t g = 0; g < sizes.size(); ++g)
      est.subspaces.push_back(
          detail::spectral_subspace(m, l.eig, l.label, static_cast<int>(g), static_cast<Index>(sizes[g])));
    est.condition = detail::stacked_condition(est.subspaces);
    out.estimates.push_back(std::move(est));
  }
  for (std::size_t i = 0; i < q; ++i) {
    auto& est = out.estimates[i];
    const auto& next = out.estimates[(i + 1) % q];
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      const Matrix image = cycle[i] * est.subspaces[g].basis();
      const double size = operator_norm(image);
      const double defect = size > 0 ? containment_defect(image, next.subspaces[g]) / size : 0.0;
      est.residuals.push_back(defect);
      out.max_residual = std::max(out.max_residual, defect);
    }
  }
  if (out.max_residual > tol.invariance) {
    rep.converged = false;
    std::ostringstream os;
    os << "invariance_residual " << out.max_residual << " above " << tol.invariance;
    rep.warnings.push_back(os.str());
  }
  return out;
}

/// Exact Oseledets data over a FiniteCycle base, in orbit order from the origin.
inline PeriodicSpectrum lyapunov_periodic(const CocycleSpec& c) {
  const auto q = c.base().period();
  if (!q) fail_validation("not_periodic", "lyapunov_periodic needs a finite-cycle base");
  const OrbitSegment seg = orbit(c.base(), c.base().origin(), *q);
  return periodic_spectrum(orbit_matrices(c, seg.origin(), *q), seg.points, c.tolerances());
}

// ---------------------------------------------------------------------------
// Bundles

/// E^{<cut} at x: right-singular directions of S^L_x whose finite-time
/// exponents lie below `cut`.
inline Subspace stable_bundle(const CocycleSpec& c, const BasePoint& x, std::size_t length, double cut) {
  require(length >= 1, "invalid_length", "stable_bundle needs L >= 1");
  const Index n = c.dim();
  const Matrix sl = iterate(c, x, length);
  Eigen::JacobiSVD<Matrix> svd(sl, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double gap = c.tolerances().gap;
  Index keep = 0;  // singular directions at or above the cut
  for (Index i = 0; i < n; ++i) {
    const double e = s[i] > 0 ? std::log(s[i]) / static_cast<double>(length) : kNegInf;
    if (std::abs(e - cut) < gap / 2) {
      std::ostringstream os;
      os << "finite-time exponent " << e << " lies within " << gap / 2 << " of the cut " << cut;
      fail_numerical("no_spectral_gap", os.str());
    }
    if (e > cut) ++keep;
  }
  if (keep == n) fail_numerical("empty_bundle", "no exponent lies below the cut");
  return Subspace::from_orthonormal(svd.matrixV().rightCols(n - keep), 1e-10);
}

struct ContractionCheck {
  bool contracting = false;
  std::size_t n_found = 0;
  std::vector<double> sup_norms;  // sup over the sample of |S^k|V|, k = 1..
  double invariance_defect = 0.0;
};

using SubspaceFn = std::function<Subspace(const BasePoint&)>;

/// Searches k <= n_max with sup_x |S^k_x restricted to V_x| < 1 - 1e-10.
inline ContractionCheck check_uniform_contraction(const CocycleSpec& c, const SubspaceFn& v,
                                                  const std::vector<BasePoint>& sample, std::size_t n_max) {
  require(!sample.empty() && n_max >= 1, "invalid_sample", "check_uniform_contraction needs points");
  ContractionCheck out;
  std::vector<Matrix> images;
  for (const auto& x : sample) {
    const Subspace vx = v(x);
    const Matrix image = c.at(x) * vx.basis();
    const double size = operator_norm(image);
    if (size > 0)
      out.invariance_defect =
          std::max(out.invariance_defect, containment_defect(image, v(c.base().forward(x))) / size);
    images.push_back(vx.basis());
  }
  if (out.invariance_defect > c.tolerances().invariance) {
    std::ostringstream os;
    os << "bundle invariance defect " << out.invariance_defect;
    fail_numerical("not_invariant", os.str());
  }
  std::vector<BasePoint> at = sample;
  for (std::size_t k = 1; k <= n_max; ++k) {
    double sup = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      images[i] = c.at(at[i]) * images[i];
      at[i] = c.base().forward(at[i]);
      sup = std::max(sup, operator_norm(images[i]));
    }
    out.sup_norms.push_back(sup);
    if (sup < 1.0 - 1e-10) {
      out.contracting = true;
      out.n_found = k;
      return out;
    }
  }
  return out;
}

/// The k-dimensional subspace at x into which a generic k-frame pushed from
/// f^{-L}(x) converges: the sum of the k fastest Oseledets directions.
inline Subspace fast_subspace(const CocycleSpec& c, const BasePoint& x, Index k, std::size_t length,
                              std::uint64_t seed = 0x5eed) {
  require(k >= 1 && k <= c.dim(), "invalid_dimension", "fast_subspace needs 1 <= k <= n");
  Rng rng(seed);
  Matrix frame = random_frame(c.dim(), k, rng);
  BasePoint p = c.base().retreat(x, length);
  for (std::size_t s = 0; s < length; ++s) {
    Eigen::HouseholderQR<Matrix> qr(c.at(p) * frame);
    frame = qr.householderQ() * Matrix::Identity(c.dim(), k);
    p = c.base().forward(p);
  }
  return Subspace::from_orthonormal(frame, 1e-10);
}

/// Complement of the top-k right-singular space of S^L_x, found by pushing a
/// frame backwards through the transposes: the filtration space E^{<lambda}.
inline Subspace slow_subspace(const CocycleSpec& c, const BasePoint& x, Index k, std::size_t length,
                              std::uint64_t seed = 0x5eed) {
  const Index n = c.dim();
  require(k >= 0 && k < n, "invalid_dimension", "slow_subspace needs 0 <= k < n");
  if (k == 0) return Subspace::full(n);
  const OrbitSegment seg = orbit(c.base(), x, length);
  Rng rng(seed);
  Matrix frame = random_frame(n, k, rng);
  for (std::size_t s = length; s-- > 0;) {
    Eigen::HouseholderQR<Matrix> qr(c.at(seg.points[s]).transpose() * frame);
    frame = qr.householderQ() * Matrix::Identity(n, k);
  }
  return Subspace::from_orthonormal(frame, 1e-10).complement();
}

/// E_j = fast(k_j) intersected with slow(k_{j-1}) for each exponent group,
/// k_j the cumulative multiplicity through group j.
inline OseledetsEstimate oseledets_estimate(const CocycleSpec& c, const BasePoint& x,
                                            const std::vector<ExponentGroup>& groups, std::size_t length,
                                            std::uint64_t seed = 0x5eed) {
  const Index n = c.dim();
  OseledetsEstimate est;
  est.point = x;
  Index before = 0;
  for (const auto& g : groups) {
    const Index through = before + static_cast<Index>(g.multiplicity);
    const Subspace fast = fast_subspace(c, x, through, length, seed);
    if (before == 0) {
      est.subspaces.push_back(fast);
    } else {
      // v = F a must be orthogonal to the top-`before` space, the complement of slow.
      const Subspace top = slow_subspace(c, x, before, length, seed).complement();
      const Matrix constraint = top.basis().transpose() * fast.basis();
      Eigen::JacobiSVD<Matrix> svd(constraint, Eigen::ComputeFullV);
      const Matrix coeffs = svd.matrixV().rightCols(through - before);
      est.subspaces.push_back(Subspace::span(fast.basis() * coeffs));
    }
    before = through;
  }
  require(before == n, "invalid_groups", "group multiplicities must sum to n");
  est.condition = detail::stacked_condition(est.subspaces);
  return est;
}

}  // namespace stochdom
