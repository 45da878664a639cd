#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "stochdom/analysis.hpp"

using namespace stochdom;

namespace {

StochasticMatrix two_state(double a, double b) {
  Matrix m(2, 2);
  m << 1 - a, a, b, 1 - b;
  return StochasticMatrix::from(m);
}

StochasticMatrix worked() {
  Matrix m(2, 2);
  m << 0.5, 0.5, 0.25, 0.75;
  return StochasticMatrix::from(m);
}

CocycleSpec constant(const StochasticMatrix& s) { return CocycleSpec(FiniteCycle{1}, Tabulated{{s}}); }

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Splitting u_and(const Vector& w) {
  return Splitting{{Subspace::line(ProjectionPair(w.size()).u()), Subspace::line(w)}};
}

// Normal factors 1/2 on w1 and 1/8 on w2, plus a u-row tilt b inside N.
struct ThreeBlock {
  Vector w1 = vec({1, -1, 0}) / std::sqrt(2.0);
  Vector w2 = vec({1, 1, -2}) / std::sqrt(6.0);
  StochasticMatrix s;
  explicit ThreeBlock(double tilt = 0.0) : s(build(tilt)) {}
  StochasticMatrix build(double tilt) const {
    const Vector u = ProjectionPair(3).u();
    const Vector b = tilt * w1 - 0.5 * tilt * w2;
    const Matrix m = u * u.transpose() + u * b.transpose() + 0.5 * w1 * w1.transpose() +
                     0.125 * w2 * w2.transpose();
    return StochasticMatrix::from(m);
  }
};

}  // namespace

TEST(DominationRatio, ScalarExamples) {
  const auto c = constant(two_state(0.25, 0.25));
  const auto split = u_and(vec({1, -1}));
  EXPECT_NEAR(domination_ratio(c, split, std::size_t{0}, 1), 0.5, 1e-15);
  EXPECT_NEAR(domination_ratio(c, split, std::size_t{0}, 3), 0.125, 1e-15);
  const auto id = constant(StochasticMatrix::identity(2));
  EXPECT_NEAR(domination_ratio(id, u_and(vec({1, 0})), std::size_t{0}, 4), 1.0, 1e-15);
}

TEST(DominationRatio, KernelMeetsF1) {
  const auto c = constant(StochasticMatrix::uniform(2));
  const Splitting split{{Subspace::line(vec({1, -1})), Subspace::line(vec({1, 1}))}};
  try {
    domination_ratio(c, split, std::size_t{0}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.reason(), "kernel_meets_F1");
  }
}

TEST(DominationRatio, RejectsBadSplittings) {
  const auto c = constant(two_state(0.25, 0.25));
  EXPECT_THROW(domination_ratio(c, Splitting{{Subspace::line(vec({1, 1}))}}, std::size_t{0}, 1), Error);
  EXPECT_THROW(domination_ratio(c, u_and(vec({1, 1})), std::size_t{0}, 1), Error);
  EXPECT_THROW(domination_ratio(c, u_and(vec({1, -1})), std::size_t{0}, 0), Error);
  EXPECT_THROW(domination_ratio(c, u_and(vec({1, -1})), std::size_t{0}, 1, 2), Error);
}

TEST(SupInf, AgreesOnRandomInvertibleRestrictions) {
  Rng rng(21);
  for (int k = 0; k < 200; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const auto s = make_invertible(random_stochastic(n, rng), 0.1, rng);
    const Index d1 = 1 + static_cast<Index>(rng.index(static_cast<std::size_t>(n - 1)));
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j) g.col(j) = rng.gaussian(n);
    const Splitting split{{Subspace::span(g.leftCols(d1)), Subspace::span(g.rightCols(n - d1))}};
    const std::size_t m = 1 + rng.index(3);
    const auto r = supinf_identity_check(constant(s), split, std::size_t{0}, m);
    EXPECT_NEAR(r.lhs, r.rhs, 1e-10 * std::max(1.0, r.lhs));
  }
}

TEST(SupInf, WorkedCase) {
  const auto r = supinf_identity_check(constant(two_state(0.25, 0.25)), u_and(vec({1, -1})), std::size_t{0}, 1);
  EXPECT_NEAR(r.lhs, 0.5, 1e-15);
  EXPECT_NEAR(r.rhs, 0.5, 1e-15);
}

TEST(Certify, ConstantTwoState) {
  const auto c = constant(two_state(0.25, 0.25));
  SplittingField f;
  f.set(std::size_t{0}, u_and(vec({1, -1})));
  const auto cert = certify_domination(c, f, {std::size_t{0}}, 5);
  EXPECT_TRUE(cert.valid);
  EXPECT_EQ(cert.m, 1u);
  EXPECT_NEAR(cert.worst_ratio, 0.5, 1e-15);
}

TEST(Certify, IdentityFails) {
  const auto c = constant(StochasticMatrix::identity(2));
  SplittingField f;
  f.set(std::size_t{0}, u_and(vec({1, -1})));
  const auto cert = certify_domination(c, f, {std::size_t{0}}, 5);
  EXPECT_FALSE(cert.valid);
  EXPECT_NEAR(cert.worst_ratio, 1.0, 1e-15);
  EXPECT_EQ(cert.worst_by_m.size(), 5u);
}

TEST(Certify, ThreeBlocksBothCuts) {
  ThreeBlock tb;
  const auto c = constant(tb.s);
  SplittingField f;
  f.set(std::size_t{0}, Splitting{{Subspace::line(ProjectionPair(3).u()), Subspace::line(tb.w1), Subspace::line(tb.w2)}});
  const auto cert = certify_domination(c, f, {std::size_t{0}}, 3);
  ASSERT_TRUE(cert.valid);
  EXPECT_EQ(cert.m, 1u);
  ASSERT_EQ(cert.per_cut_ratios.size(), 2u);
  EXPECT_NEAR(cert.per_cut_ratios[0], 0.5, 1e-14);
  EXPECT_NEAR(cert.per_cut_ratios[1], 0.25, 1e-14);
}

TEST(Certify, RejectsNonInvariantSplitting) {
  const auto c = constant(worked());
  SplittingField f;
  f.set(std::size_t{0}, u_and(vec({1, -1})));
  try {
    certify_domination(c, f, {std::size_t{0}}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.reason(), "not_invariant");
  }
}

TEST(SplittingField, InsertionOrderAndLookup) {
  SplittingField f;
  f.set(std::size_t{2}, u_and(vec({1, -1})));
  f.set(std::size_t{0}, u_and(vec({1, -1})));
  f.set(std::size_t{2}, u_and(vec({2, -1})));
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(std::get<std::size_t>(f.points()[0]), 2u);
  EXPECT_EQ(f.find(std::size_t{1}), nullptr);
  EXPECT_THROW(f.at(std::size_t{1}), Error);
  EXPECT_LT(f.at(std::size_t{2}).parts[1].residual(vec({2, -1}).normalized()), 1e-15);
}

TEST(SolveSigma, Examples) {
  const ProjectionPair p(2);
  const std::vector<Subspace> n2{Subspace::from_orthonormal(p.normal_basis())};
  const std::vector<BasePoint> pts{std::size_t{0}};

  const auto sym = solve_sigma(constant(two_state(0.3, 0.3)), pts, n2, 1, true);
  EXPECT_NEAR(sym.sigma[0](0, 0), 0.0, 1e-15);

  const auto w = solve_sigma(constant(worked()), pts, n2, 1, true);
  // The normal basis for n = 2 is (1, -1) / sqrt 2.
  EXPECT_NEAR(w.sigma[0](0, 0), 1.0 / 3.0, 1e-12);
  EXPECT_LE(w.residual, 1e-10);
  EXPECT_LT(angle(vec({2, -1}), Subspace::span(w.graph_basis(0, p))), 1e-10);
  EXPECT_LT(w.invariance, 1e-12);
  EXPECT_NEAR(w.contraction, 0.25, 1e-15);

  const auto flat = solve_sigma(constant(StochasticMatrix::uniform(2)), pts, n2, 1, true);
  EXPECT_NEAR(flat.sigma[0](0, 0), 0.0, 1e-15);
}

TEST(SolveSigma, GeometricDecay) {
  Rng rng(22);
  for (int k = 0; k < 40; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(4));
    const std::size_t q = 1 + rng.index(4);
    std::vector<StochasticMatrix> ms;
    for (std::size_t i = 0; i < q; ++i) ms.push_back(random_stochastic(n, rng));
    CocycleSpec c(FiniteCycle{q}, Tabulated{ms});
    const ProjectionPair p(n);
    const auto seg = orbit(c.base(), std::size_t{0}, q);
    const std::vector<Subspace> n2(q, Subspace::from_orthonormal(p.normal_basis()));
    std::size_t m_hat = 1;
    while (true) {
      double sup = 0;
      for (const auto& x : seg.points) sup = std::max(sup, operator_norm(iterate_normal(c, p, x, m_hat).matrix));
      if (sup <= 0.5) break;
      ++m_hat;
    }
    const auto s = solve_sigma(c, seg.points, n2, m_hat, true);
    EXPECT_LE(s.residual, 1e-10);
    EXPECT_LT(s.invariance, 1e-8);
    for (std::size_t i = 1; i < s.increments.size(); ++i)
      EXPECT_LE(s.increments[i], s.contraction * s.increments[i - 1] + 1e-15);
  }
}

TEST(SolveSigma, RejectsWeakContraction) {
  const ProjectionPair p(2);
  const std::vector<Subspace> n2{Subspace::from_orthonormal(p.normal_basis())};
  EXPECT_THROW(solve_sigma(constant(two_state(0.1, 0.1)), {std::size_t{0}}, n2, 1, true), Error);
  EXPECT_NO_THROW(solve_sigma(constant(two_state(0.1, 0.1)), {std::size_t{0}}, n2, 4, true));
  const std::vector<Subspace> off{Subspace::line(vec({1, 0}))};
  EXPECT_THROW(solve_sigma(constant(worked()), {std::size_t{0}}, off, 1, true), Error);
}

TEST(SolveSigma, NonPeriodicPrefixIsTrusted) {
  CocycleSpec c(CircleRotation{}, Interpolated{{0.0, 0.5}, {worked(), two_state(0.3, 0.2)}});
  const ProjectionPair p(2);
  const auto seg = orbit(c.base(), 0.1, 120);
  const std::vector<Subspace> n2(seg.length(), Subspace::from_orthonormal(p.normal_basis()));
  const auto s = solve_sigma(c, seg.points, n2, 1, false);
  ASSERT_GT(s.trusted, 0u);
  EXPECT_LT(s.trusted, seg.length());
  EXPECT_LT(s.invariance, 1e-8);
}

TEST(Lift, ThreeBlockTilted) {
  ThreeBlock tb(0.05);
  const auto c = constant(tb.s);
  const std::vector<BasePoint> pts{std::size_t{0}};
  const auto res = lift_splitting(c, pts, {Subspace::line(tb.w1)}, {Subspace::line(tb.w2)}, 1, true);
  EXPECT_TRUE(res.certificate.valid);
  EXPECT_LT(res.certificate.invariance_residual, 1e-8);
  EXPECT_GT(res.min_angle, 1e-3);
  EXPECT_GE(res.certificate.m, res.m_theory);
  // F2 is the 1/8 eigenvector of S.
  const Subspace& f2 = res.field.at(std::size_t{0}).parts[1];
  EXPECT_LT(containment_defect(tb.s.matrix() * f2.basis() - 0.125 * f2.basis(), Subspace::full(3)), 1e-12);
}

TEST(Lift, RandomCyclesAreInvariant) {
  Rng rng(23);
  int checked = 0;
  for (int k = 0; k < 60; ++k) {
    const Index n = 3 + static_cast<Index>(rng.index(3));
    const std::size_t q = 1 + rng.index(3);
    std::vector<StochasticMatrix> ms;
    for (std::size_t i = 0; i < q; ++i) ms.push_back(random_stochastic(n, rng));
    CocycleSpec c(FiniteCycle{q}, Tabulated{ms});
    const auto spec = lyapunov_periodic(c);
    if (spec.report.groups.size() < 3 || spec.report.groups[0].multiplicity != 1) continue;
    // N1 = Q-image of the second group, N2 = Q-image of everything below.
    const ProjectionPair p(n);
    std::vector<Subspace> n1, n2;
    for (const auto& est : spec.estimates) {
      n1.push_back(Subspace::span(p.Q() * est.subspaces[1].basis()));
      Matrix rest(n, 0);
      for (std::size_t g = 2; g < est.subspaces.size(); ++g) {
        Matrix grown(n, rest.cols() + est.subspaces[g].dim());
        grown << rest, est.subspaces[g].basis();
        rest = grown;
      }
      n2.push_back(Subspace::span(p.Q() * rest));
    }
    const auto seg = orbit(c.base(), std::size_t{0}, q);
    std::size_t m_hat = 1;
    for (;; ++m_hat) {
      double sup = 0;
      for (std::size_t i = 0; i < q; ++i)
        sup = std::max(sup, operator_norm(p.Q() * iterate(c, seg.points[i], m_hat) * n2[i].basis()));
      if (sup <= 0.5 || m_hat > 200) break;
    }
    if (m_hat > 200) continue;
    const auto res = lift_splitting(c, seg.points, n1, n2, m_hat, true);
    EXPECT_LT(res.certificate.invariance_residual, 1e-8);
    EXPECT_GT(res.min_angle, 1e-3);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Contracting, Examples) {
  const ProjectionPair p(2);
  auto run = [&](const StochasticMatrix& s) {
    const auto c = constant(s);
    return contracting_case(c, orbit(c.base(), std::size_t{0}, 1));
  };
  const auto sym = run(two_state(0.25, 0.25));
  EXPECT_LT(angle(vec({1, -1}), sym.lift.field.at(std::size_t{0}).parts[1]), 1e-12);
  EXPECT_NEAR(sym.exponent_bound, std::log(0.5), 1e-14);
  EXPECT_TRUE(sym.lift.certificate.valid);

  const auto flat = run(StochasticMatrix::uniform(2));
  EXPECT_EQ(flat.exponent_bound, kNegInf);
  EXPECT_LT(angle(vec({1, -1}), flat.lift.field.at(std::size_t{0}).parts[1]), 1e-12);

  const auto w = run(worked());
  EXPECT_LT(angle(vec({2, -1}), w.lift.field.at(std::size_t{0}).parts[1]), 1e-10);

  EXPECT_THROW(run(StochasticMatrix::identity(2)), Error);
}

TEST(Contracting, MatchesPeriodicSpectrumAndSeparates) {
  Rng rng(24);
  for (int k = 0; k < 40; ++k) {
    const Index n = 2 + static_cast<Index>(rng.index(5));
    const std::size_t q = 1 + rng.index(3);
    std::vector<StochasticMatrix> ms;
    for (std::size_t i = 0; i < q; ++i) ms.push_back(random_stochastic(n, rng));
    CocycleSpec c(FiniteCycle{q}, Tabulated{ms});
    const auto res = contracting_case(c, orbit(c.base(), std::size_t{0}, q));
    const auto spec = lyapunov_periodic(c);
    ASSERT_EQ(spec.report.groups[0].multiplicity, 1u);
    for (std::size_t i = 0; i < q; ++i) {
      Matrix neg(n, 0);
      for (std::size_t g = 1; g < spec.estimates[i].subspaces.size(); ++g) {
        Matrix grown(n, neg.cols() + spec.estimates[i].subspaces[g].dim());
        grown << neg, spec.estimates[i].subspaces[g].basis();
        neg = grown;
      }
      EXPECT_LT(subspace_distance(Subspace::span(neg), res.lift.field.at(std::size_t{i}).parts[1]), 1e-6);
    }
    const auto& cert = res.lift.certificate;
    ASSERT_TRUE(cert.valid);
    const double second = spec.report.groups[1].value;
    EXPECT_GE(0.0 - second, std::log(2.0) / static_cast<double>(cert.m) - 1e-8);
    EXPECT_LE(second, res.sharp_bound + 1e-12);
    EXPECT_LE(second, res.exponent_bound + 1e-12);
  }
}

TEST(Contracting, NonPeriodicOrbit) {
  CocycleSpec c(CircleRotation{}, Interpolated{{0.0, 0.5}, {worked(), two_state(0.3, 0.2)}});
  const auto seg = orbit(c.base(), 0.1, 50);
  const auto res = contracting_case(c, seg);
  EXPECT_TRUE(res.lift.certificate.valid);
  EXPECT_EQ(res.lift.certificate.points.size(), 50u);
  EXPECT_LT(res.lift.certificate.invariance_residual, 1e-8);
}

TEST(Analyze, ClassifiesConstantCocycles) {
  EXPECT_EQ(analyze(constant(StochasticMatrix::identity(2))).classification, SpectrumClass::trivial);
  const auto two = analyze(constant(two_state(0.25, 0.25)));
  EXPECT_EQ(two.classification, SpectrumClass::two_point);
  EXPECT_TRUE(two.zero_split.valid());
  const auto three = analyze(constant(ThreeBlock().s));
  EXPECT_EQ(three.classification, SpectrumClass::multi_point_dominated);
  EXPECT_TRUE(three.empirical);
  ASSERT_EQ(three.spectrum.groups.size(), 3u);
  EXPECT_NEAR(three.spectrum.groups[1].value, std::log(0.5), 1e-10);
}

TEST(Analyze, RotationBase) {
  Matrix lo(2, 2), hi(2, 2);
  lo << 0.8, 0.2, 0.3, 0.7;
  hi << 0.6, 0.4, 0.1, 0.9;
  CocycleSpec c(CircleRotation{}, Interpolated{{0.2, 0.7}, {StochasticMatrix::from(lo), StochasticMatrix::from(hi)}});
  AnalysisOptions opt;
  opt.length = 600;
  opt.sample = 4;
  const auto a = analyze(c, opt);
  EXPECT_EQ(a.classification, SpectrumClass::two_point);
  EXPECT_EQ(a.sample.size(), 4u);
  EXPECT_TRUE(a.zero_split.valid()) << a.zero_split.failure;
}

TEST(Analyze, TrivialSpectrumHasNoCertificate) {
  const auto a = analyze(constant(StochasticMatrix::identity(3)));
  EXPECT_EQ(a.classification, SpectrumClass::trivial);
  EXPECT_FALSE(a.zero_split.certificate);
  EXPECT_TRUE(a.zero_split.failure.empty());
}
