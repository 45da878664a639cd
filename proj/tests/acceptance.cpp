// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stochdom/app.hpp"

using namespace stochdom;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail << std::endl;
  if (!pass) ++failures;
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

CocycleSpec random_spec(Index n, Rng& rng) {
  switch (rng.index(3)) {
    case 0: {
      const std::size_t q = 1 + rng.index(4);
      std::vector<StochasticMatrix> ms;
      for (std::size_t k = 0; k < q; ++k) ms.push_back(random_stochastic(n, rng));
      return CocycleSpec(FiniteCycle{q}, Tabulated{ms});
    }
    case 1:
      return CocycleSpec(CircleRotation{}, LocallyConstant{{0.0, 0.3, 0.7},
                                                           {random_stochastic(n, rng), random_stochastic(n, rng),
                                                            random_stochastic(n, rng)}});
    default:
      return CocycleSpec(TorusAutomorphism{},
                         Interpolated{{0.1, 0.6}, {random_stochastic(n, rng), random_stochastic(n, rng)}});
  }
}

CocycleSpec random_periodic(Index n, std::size_t q, Rng& rng) {
  std::vector<StochasticMatrix> ms;
  for (std::size_t k = 0; k < q; ++k) ms.push_back(random_stochastic(n, rng));
  return CocycleSpec(FiniteCycle{q}, Tabulated{ms});
}

StochasticMatrix worked() {
  Matrix m(2, 2);
  m << 0.5, 0.5, 0.25, 0.75;
  return StochasticMatrix::from(m);
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// 1 and 2: factor and decomposition identities.
void identities() {
  Rng rng(101);
  double factor = 0.0, decomposition = 0.0;
  for (int s = 0; s < 200; ++s) {
    const Index n = 2 + static_cast<Index>(rng.index(7));
    const auto c = random_spec(n, rng);
    const ProjectionPair p(n);
    const BasePoint x = c.base().sample_mu(rng, 1).front();
    Matrix acc = Matrix::Identity(n, n);
    Matrix normal = Matrix::Identity(n - 1, n - 1);
    BasePoint y = x;
    for (std::size_t k = 0; k <= 50; ++k) {
      const Matrix composed = p.normal_basis() * normal * p.normal_basis().transpose();
      factor = std::max(factor, (composed - p.Q() * acc * p.Q()).cwiseAbs().maxCoeff());
      const Matrix rebuilt = p.P() + p.P() * acc * p.Q() + composed;
      decomposition = std::max(decomposition, (rebuilt - acc).cwiseAbs().maxCoeff());
      const Matrix step = c.at(y);
      acc = step * acc;
      normal = normal_part(step, p).matrix * normal;
      y = c.base().forward(y);
    }
    // The library paths agree with the incremental products above.
    const std::size_t k = 1 + rng.index(50);
    factor = std::max(factor, (p.normal_basis() * iterate_normal(c, p, x, k).matrix * p.normal_basis().transpose() -
                               p.Q() * iterate(c, x, k) * p.Q())
                                  .cwiseAbs()
                                  .maxCoeff());
    decomposition = std::max(decomposition, (decompose(c, p, x, k).sum() - iterate(c, x, k)).cwiseAbs().maxCoeff());
  }
  report(1, "factor identity", factor <= 1e-12, "max |S-hat^k - Q S^k Q| = " + sci(factor) + " over 200 specs, k <= 50");
  report(2, "decomposition identity", decomposition <= 1e-12,
         "max |P + P S^k Q + S-hat^k - S^k| = " + sci(decomposition));
}

// 3: angle between u and negative-exponent Oseledets spaces.
void angle_bound() {
  Rng rng(103);
  const double bound = std::numbers::pi / 4 - 1e-8;
  int checked = 0, violations = 0;
  double worst = std::numbers::pi;
  std::string example;
  while (checked < 500) {
    const Index n = 2 + static_cast<Index>(rng.index(5));
    const auto c = random_periodic(n, 1 + rng.index(4), rng);
    const auto ps = lyapunov_periodic(c);
    if (ps.report.groups.size() < 2) continue;
    ++checked;
    const ProjectionPair p(n);
    bool bad = false;
    for (const auto& est : ps.estimates)
      for (std::size_t g = 1; g < est.subspaces.size(); ++g) {
        const double a = angle(p.u(), est.subspaces[g]);
        if (a < worst) worst = a;
        if (a < bound) bad = true;
      }
    if (bad) {
      ++violations;
      if (example.empty()) example = "n = " + std::to_string(n) + ", q = " + std::to_string(*c.base().period());
    }
  }
  report(3, "angle bound", violations == 0,
         std::to_string(violations) + " of 500 periodic specs violate angle >= pi/4 - 1e-8; smallest angle " +
             sci(worst) + (example.empty() ? "" : "; first violation at " + example));
}

// 4: both evaluations of the domination ratio.
void sup_inf() {
  Rng rng(104);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const auto s = make_invertible(random_stochastic(n, rng), 0.1, rng);
    const Index d1 = 1 + static_cast<Index>(rng.index(static_cast<std::size_t>(n - 1)));
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j) g.col(j) = rng.gaussian(n);
    const Splitting split{{Subspace::span(g.leftCols(d1)), Subspace::span(g.rightCols(n - d1))}};
    const CocycleSpec c(FiniteCycle{1}, Tabulated{{s}});
    const auto r = supinf_identity_check(c, split, std::size_t{0}, 1 + rng.index(3));
    worst = std::max(worst, std::abs(r.lhs - r.rhs));
  }
  report(4, "sup-inf identity", worst <= 1e-10, "max |sup/inf - norm/co-norm| = " + sci(worst) + " on 200 restrictions");
}

// 5: graph transform fixed point.
void graph_transform() {
  Rng rng(105);
  double residual = 0.0;
  int solved = 0;
  for (int k = 0; k < 100; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const std::size_t q = 1 + rng.index(4);
    const auto c = random_periodic(n, q, rng);
    const ProjectionPair p(n);
    const auto seg = orbit(c.base(), std::size_t{0}, q);
    const std::vector<Subspace> n2(q, Subspace::from_orthonormal(p.normal_basis()));
    std::size_t m_hat = 1;
    for (;; ++m_hat) {
      double sup = 0;
      for (const auto& x : seg.points) sup = std::max(sup, operator_norm(iterate_normal(c, p, x, m_hat).matrix));
      if (sup <= 0.5) break;
    }
    const auto s = solve_sigma(c, seg.points, n2, m_hat, true);
    residual = std::max(residual, s.residual);
    ++solved;
  }
  const ProjectionPair p(2);
  const CocycleSpec w(FiniteCycle{1}, Tabulated{{worked()}});
  const auto s = solve_sigma(w, {std::size_t{0}}, {Subspace::from_orthonormal(p.normal_basis())}, 1, true);
  const double sigma_err = std::abs(s.sigma[0](0, 0) - 1.0 / 3.0);
  const double graph_angle = angle(vec2(2, -1), Subspace::span(s.graph_basis(0, p)));
  residual = std::max(residual, s.residual);
  report(5, "graph transform", residual <= 1e-10 && sigma_err <= 1e-12 && graph_angle <= 1e-10,
         "max residual " + sci(residual) + " over " + std::to_string(solved + 1) + " solves; worked example |sigma - 1/3| = " +
             sci(sigma_err) + ", angle to span(2,-1) = " + sci(graph_angle));
}

// 6: isotopy identities.
void isotopy() {
  Rng rng(106);
  double endpoints = 0.0, scaling = 0.0, excess = -1.0;
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(7));
    const auto s = random_stochastic(n, rng);
    const auto t = random_stochastic(n, rng);
    const ProjectionPair p(n);
    endpoints = std::max(endpoints, (deform(s, 0.0).matrix() - Matrix::Constant(n, n, 1.0 / n)).cwiseAbs().maxCoeff());
    endpoints = std::max(endpoints, (deform(s, 1.0).matrix() - s.matrix()).cwiseAbs().maxCoeff());
    const double rho = rng.uniform(), rho2 = rng.uniform();
    scaling = std::max(scaling,
                       (normal_part(deform(s, rho), p).matrix - rho * normal_part(s, p).matrix).cwiseAbs().maxCoeff());
    const auto l = lipschitz_check(s, t, rho, rho2);
    if (!(l.lhs <= l.bound + 1e-12)) ++violations;
    excess = std::max(excess, l.lhs - l.bound);
  }
  report(6, "isotopy identities", endpoints == 0.0 && scaling <= 1e-14 && violations == 0,
         "endpoint defect " + sci(endpoints) + ", normal scaling defect " + sci(scaling) + ", stated Lipschitz bound violated on " +
             std::to_string(violations) + " of 1000 pairs (largest excess " + sci(excess) + ")");
}

// 7: exponent shift and power series.
void exponent_shift() {
  Rng rng(107);
  double worst = 0.0;
  for (int k = 0; k < 40; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const auto c = random_periodic(n, 1 + rng.index(3), rng);
    for (int r = 1; r <= 9; ++r) worst = std::max(worst, exponent_shift_check(c, 0.1 * r).max_error);
  }
  double series = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto s = random_stochastic(2 + static_cast<Index>(rng.index(6)), rng);
    const double rho = rng.uniform();
    for (std::size_t m = 0; m <= 20; ++m) series = std::max(series, deformed_power(s, rho, m).defect);
  }
  report(7, "exponent shift", worst <= 1e-9 && series <= 1e-11,
         "max |lambda-hat - (lambda + log rho)| = " + sci(worst) + "; power series defect " + sci(series) + " for powers <= 20");
}

// 8: Abel continuity of Phi^rho on the worked example.
void abel() {
  bool ok = true;
  std::string detail;
  // v spans the negative-exponent eigenspace of the worked example.
  for (const Vector& v : {vec2(2, -1)}) {
    double prev = std::numeric_limits<double>::infinity();
    detail += detail.empty() ? "" : "; ";
    detail += "v = (" + sci(v[0]) + ", " + sci(v[1]) + "):";
    for (double rho : {0.9, 0.99, 0.999}) {
      const double gap = (phi_rho(worked(), rho, v) - v).norm();
      ok = ok && gap < prev && gap < 10 * (1 - rho);
      prev = gap;
      detail += " " + sci(gap);
    }
  }
  report(8, "Abel continuity", ok, "|Phi^rho(v) - v| at rho = 0.9, 0.99, 0.999 for " + detail);
}

// 9: transport construction.
void transport_lemma() {
  Rng rng(109);
  double image = 0.0, dev_excess = -1.0, t_excess = -1.0;
  for (int k = 0; k < 1000; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(5));
    const TransportConstants c(n);
    const double eps = std::pow(10.0, -12.0 * rng.uniform()) / (c.C * c.C);
    const Vector v = random_unit_normal(n, rng);
    const Vector w = rotate_in_normal(v, eps * rng.uniform(), rng);
    const auto r = transport(v, w, eps);
    image = std::max(image, (r.T.matrix() * v - r.t * w).cwiseAbs().maxCoeff());
    dev_excess = std::max(dev_excess, r.max_deviation - (c.D + 2 * c.D * c.D) * std::sqrt(eps));
    t_excess = std::max(t_excess, (1 - c.D * (std::sqrt(eps) + eps) - 1e-12) - r.t);
  }
  const TransportConstants two(2);
  const double consts = std::max(std::abs(two.D - std::sqrt(2.0)), std::abs(two.C - (std::sqrt(2.0) + 4)));
  report(9, "transport construction", image <= 1e-12 && dev_excess <= 0 && t_excess <= 0 && consts <= 1e-15,
         "max |Tv - tw| = " + sci(image) + ", max deviation minus bound " + sci(dev_excess) + ", t shortfall " + sci(t_excess) +
             ", n = 2 constants defect " + sci(consts));
}

// 10: main lemma composition.
void access_lemma() {
  Rng rng(110);
  double residual = 0.0, excess = -1.0;
  for (int k = 0; k < 200; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const TransportConstants c(n);
    const double eps = rng.uniform(0.05, 0.25);
    const auto s = random_stochastic(n, rng);
    const Vector x = random_unit_normal(n, rng);
    Vector y = rotate_in_normal(x, eps * eps / (c.C * c.C) * rng.uniform(), rng);
    if (rng.uniform() < 0.3) y = -y;
    const auto r = access(s, x, y, eps);
    residual = std::max(residual, r.residual);
    excess = std::max(excess, r.distance - eps);
  }
  report(10, "main lemma composition", residual <= 1e-11 && excess <= 0,
         "max |Sx - lambda R y| = " + sci(residual) + ", max (|S - R| - eps) = " + sci(excess) + " on 200 instances");
}

Matrix random_ell(Index n, Rng& rng) {
  Matrix m(n, n);
  const Vector d = rng.dirichlet(n * n);
  for (Index k = 0; k < n * n; ++k) m(k / n, k % n) = d[k];
  const double w = 2e-3 * static_cast<double>(n * n);
  return (1.0 - w) * m + Matrix::Constant(n, n, w / static_cast<double>(n * n));
}

// 11: Ruelle pipeline.
void ruelle() {
  const PartitionFamily quarter(FiniteCycle{1}, 2, EllConstant{Matrix::Constant(2, 2, 0.25)});
  const Matrix half = Matrix::Constant(2, 2, 0.5);
  const BasePoint o = std::size_t{0};
  const double a_err = (ruelle_matrix(quarter, o) - half).cwiseAbs().maxCoeff();
  const double b_err = (normalized_matrix(quarter, o, kDefaultPullback) - half).cwiseAbs().maxCoeff();
  const double h_err = (solve_density(quarter, o, kDefaultPullback).h - vec2(0.5, 0.5)).cwiseAbs().maxCoeff();
  const auto rr = analyze_ruelle(quarter);
  const auto& g = rr.analysis.spectrum.groups;
  const bool spectrum = g.size() == 2 && std::abs(g[0].value) <= 1e-10 && g[1].neg_inf;
  const bool cert = rr.analysis.zero_split.valid() && rr.analysis.zero_split.certificate->m == 1;

  Rng rng(111);
  double conformality = 0.0, residual = 0.0;
  int errors = 0;
  for (int k = 0; k < 100; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const PartitionFamily pf(CircleRotation{}, n,
                             EllInterpolated{{0.0, 0.4, 0.7}, {random_ell(n, rng), random_ell(n, rng), random_ell(n, rng)}},
                             1e-3);
    const BasePoint x = rng.uniform();
    conformality = std::max(conformality, conformality_defect(pf, x));
    try {
      const auto r = density_residual(pf, x, 200);
      residual = std::max({residual, r.projective, r.literal});
    } catch (const Error&) {
      ++errors;
    }
  }
  const bool exact = a_err <= 1e-10 && b_err <= 1e-10 && h_err <= 1e-10 && spectrum && cert;
  report(11, "Ruelle pipeline", exact && conformality <= 1e-12 && residual < 1e-8 && errors == 0,
         "quarter family: A err " + sci(a_err) + ", B err " + sci(b_err) + ", h err " + sci(h_err) + ", spectrum {0,-inf} " +
             (spectrum ? "yes" : "no") + ", certificate at m = 1 " + (cert ? "yes" : "no") +
             "; 100 random families: conformality " + sci(conformality) + ", h residual at depth 200 " + sci(residual) +
             ", unconverged " + std::to_string(errors));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 12: CLI determinism.
void determinism() {
  const fs::path root = fs::temp_directory_path() / "stochdom_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::string> demos{"gen", "lyap", "dominate", "perturb", "access", "ruelle", "ruelle_rotation", "classify"};
  int mismatched = 0, failed = 0;
  std::string which;
  for (const auto& d : demos) {
    std::vector<std::string> outputs;
    for (const std::string threads : {"1", "1", "4"}) {
      const fs::path dir = root / (d + "_" + std::to_string(outputs.size()));
      const std::string cmd = std::string(STOCHDOM_CLI) + " --config " + STOCHDOM_DEMOS + "/" + d + ".json --format csv --threads " +
                              threads + " --out " + dir.string() + " > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) ++failed;
      outputs.push_back(slurp(dir / ((d == "ruelle_rotation" ? "ruelle" : d) + ".json")) +
                        slurp(dir / ((d == "ruelle_rotation" ? "ruelle" : d) + ".csv")));
    }
    if (outputs[0].empty() || outputs[0] != outputs[1] || outputs[0] != outputs[2]) {
      ++mismatched;
      which += " " + d;
    }
  }
  report(12, "CLI determinism", mismatched == 0 && failed == 0,
         std::to_string(demos.size()) + " demo pipelines run three times (1, 1, 4 threads); " + std::to_string(mismatched) +
             " differ" + which + ", " + std::to_string(failed) + " non-zero exits");
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  auto guard = [](auto fn, int id) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, "exception", false, e.what());
    }
  };
  guard(identities, 1);
  guard(angle_bound, 3);
  guard(sup_inf, 4);
  guard(graph_transform, 5);
  guard(isotopy, 6);
  guard(exponent_shift, 7);
  guard(abel, 8);
  guard(transport_lemma, 9);
  guard(access_lemma, 10);
  guard(ruelle, 11);
  guard(determinism, 12);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << failures << " criteria failed; " << sci(secs) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
