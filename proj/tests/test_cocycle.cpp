#include <cmath>

#include <gtest/gtest.h>

#include "stochdom/cocycle.hpp"

using namespace stochdom;

namespace {

StochasticMatrix two_state(double a, double b) {
  Matrix m(2, 2);
  m << 1 - a, a, b, 1 - b;
  return StochasticMatrix::from(m);
}

CocycleSpec constant(const StochasticMatrix& s) {
  return CocycleSpec(FiniteCycle{1}, Tabulated{{s}});
}

CocycleSpec random_spec(Rng& rng) {
  const Index n = 2 + static_cast<Index>(rng.index(7));
  switch (rng.index(3)) {
    case 0: {
      const std::size_t q = 1 + rng.index(4);
      std::vector<StochasticMatrix> ms;
      for (std::size_t k = 0; k < q; ++k) ms.push_back(random_stochastic(n, rng));
      return CocycleSpec(FiniteCycle{q}, Tabulated{ms});
    }
    case 1:
      return CocycleSpec(CircleRotation{},
                         LocallyConstant{{0.0, 0.3, 0.7},
                                         {random_stochastic(n, rng), random_stochastic(n, rng),
                                          random_stochastic(n, rng)}});
    default:
      return CocycleSpec(TorusAutomorphism{},
                         Interpolated{{0.1, 0.6}, {random_stochastic(n, rng), random_stochastic(n, rng)}});
  }
}

}  // namespace

TEST(Iterate, ZeroStepsIsIdentity) {
  const auto c = constant(two_state(0.2, 0.3));
  EXPECT_EQ(iterate(c, std::size_t{0}, 0), Matrix::Identity(2, 2));
}

TEST(Iterate, ConstantPower) {
  const auto s = two_state(0.2, 0.3);
  const auto c = constant(s);
  EXPECT_LT((iterate(c, std::size_t{0}, 3) - s.matrix() * s.matrix() * s.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Iterate, CocycleIdentity) {
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto c = random_spec(rng);
    const BasePoint x = c.base().sample_mu(rng, 1).front();
    const Matrix lhs = iterate(c, x, 5);
    const Matrix rhs = iterate(c, c.base().advance(x, 3), 2) * iterate(c, x, 3);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_TRUE(is_stochastic(lhs, 1e-12));
  }
}

TEST(IterateNormal, MatchesProjectedProduct) {
  Rng rng(2);
  for (int k = 0; k < 60; ++k) {
    const auto c = random_spec(rng);
    ProjectionPair p(c.dim());
    const BasePoint x = c.base().sample_mu(rng, 1).front();
    for (std::size_t steps : {0u, 1u, 7u, 50u}) {
      const Matrix composed = p.normal_basis() * iterate_normal(c, p, x, steps).matrix * p.normal_basis().transpose();
      const Matrix direct = p.Q() * iterate(c, x, steps) * p.Q();
      EXPECT_LT((composed - direct).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(IterateNormal, ScalarFactor) {
  const auto c = constant(two_state(0.25, 0.25));
  ProjectionPair p(2);
  EXPECT_NEAR(iterate_normal(c, p, std::size_t{0}, 4).matrix(0, 0), std::pow(0.5, 4), 1e-15);
  EXPECT_EQ(iterate_normal(c, p, std::size_t{0}, 0).matrix, Matrix::Identity(1, 1));
}

TEST(Decompose, SumsToIterate) {
  Rng rng(3);
  for (int k = 0; k < 60; ++k) {
    const auto c = random_spec(rng);
    ProjectionPair p(c.dim());
    const BasePoint x = c.base().sample_mu(rng, 1).front();
    const auto d = decompose(c, p, x, 9);
    EXPECT_LT((d.sum() - iterate(c, x, 9)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Decompose, UniformAndSymmetric) {
  ProjectionPair p3(3);
  const auto d = decompose(constant(StochasticMatrix::uniform(3)), p3, std::size_t{0}, 2);
  EXPECT_LT(d.psq_part.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(d.normal_part.cwiseAbs().maxCoeff(), 1e-15);
  ProjectionPair p2(2);
  const auto e = decompose(constant(two_state(0.3, 0.3)), p2, std::size_t{0}, 3);
  EXPECT_LT(e.psq_part.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Invariants, NormBoundsAndUInvariance) {
  Rng rng(4);
  for (int k = 0; k < 80; ++k) {
    const auto c = random_spec(rng);
    const Index n = c.dim();
    ProjectionPair p(n);
    const BasePoint x = c.base().sample_mu(rng, 1).front();
    for (std::size_t steps : {1u, 5u, 20u}) {
      const Matrix s = iterate(c, x, steps);
      EXPECT_LE(infinity_norm(s), 1.0 + 1e-12);
      EXPECT_LE(operator_norm(s), std::sqrt(static_cast<double>(n)) + 1e-12);
      EXPECT_LT((s * p.u() - p.u()).norm(), 1e-13);
      // The normal part has spectral radius at most one.
      const Matrix np = iterate_normal(c, p, x, steps).matrix;
      EXPECT_LE(Eigen::EigenSolver<Matrix>(np, false).eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-10);
    }
  }
}

TEST(Generators, LocallyConstantHalfOpenCells) {
  const auto a = two_state(0.1, 0.1);
  const auto b = two_state(0.4, 0.4);
  CocycleSpec c(CircleRotation{}, LocallyConstant{{0.0, 0.5}, {a, b}});
  EXPECT_EQ(c.at(0.0), a.matrix());
  EXPECT_EQ(c.at(0.4999), a.matrix());
  EXPECT_EQ(c.at(0.5), b.matrix());
  EXPECT_EQ(c.at(0.99), b.matrix());
}

TEST(Generators, InterpolatedIsPeriodicAndConvex) {
  const auto a = two_state(0.0, 0.0);
  const auto b = two_state(1.0, 1.0);
  CocycleSpec c(CircleRotation{}, Interpolated{{0.25, 0.75}, {a, b}});
  EXPECT_LT((c.at(0.25) - a.matrix()).norm(), 1e-15);
  EXPECT_LT((c.at(0.75) - b.matrix()).norm(), 1e-15);
  EXPECT_LT((c.at(0.5) - 0.5 * (a.matrix() + b.matrix())).norm(), 1e-15);
  // Across the wrap point the weights continue linearly.
  EXPECT_LT((c.at(0.0) - 0.5 * (a.matrix() + b.matrix())).norm(), 1e-15);
  EXPECT_LT((c.at(0.125) - (0.75 * a.matrix() + 0.25 * b.matrix())).norm(), 1e-15);
  Rng rng(5);
  for (const auto& x : c.base().sample_mu(rng, 200)) EXPECT_TRUE(is_stochastic(c.at(x)));
}

TEST(Generators, Validation) {
  const auto a = two_state(0.1, 0.1);
  EXPECT_THROW(CocycleSpec(FiniteCycle{2}, Tabulated{{a}}), Error);
  EXPECT_THROW(CocycleSpec(CircleRotation{}, Tabulated{{a}}), Error);
  EXPECT_THROW(CocycleSpec(CircleRotation{}, LocallyConstant{{0.1}, {a}}), Error);
  EXPECT_THROW(CocycleSpec(CircleRotation{}, LocallyConstant{{0.0, 0.6, 0.5}, {a, a, a}}), Error);
  EXPECT_THROW(CocycleSpec(CircleRotation{}, Interpolated{{0.5, 0.2}, {a, a}}), Error);
  EXPECT_THROW(CocycleSpec(CircleRotation{}, Interpolated{{0.5}, {a, StochasticMatrix::identity(3)}}), Error);
  EXPECT_THROW(CocycleSpec(FiniteCycle{2}, Tabulated{{a, StochasticMatrix::identity(3)}}), Error);
}

TEST(Generators, FunctionalIsValidated) {
  CocycleSpec good(CircleRotation{},
                   Functional{[](const BasePoint& x) {
                                const double t = std::get<double>(x);
                                Matrix m(2, 2);
                                m << 1 - t / 2, t / 2, 0.25, 0.75;
                                return m;
                              },
                              2, "ramp"});
  EXPECT_NEAR(good.at(0.5)(0, 1), 0.25, 1e-15);
  CocycleSpec bad(CircleRotation{}, Functional{[](const BasePoint&) { return Matrix(Matrix::Ones(2, 2)); }, 2, "ones"});
  EXPECT_THROW(bad.at(0.5), Error);
}
