#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/lifting.hpp"

using namespace koopmankit;

namespace {

// Pascal's triangle built by addition, independent of the library's binomial.
std::vector<std::vector<double>> pascal(int rows) {
  std::vector<std::vector<double>> t = {{1.0}};
  for (int n = 1; n <= rows; ++n) {
    std::vector<double> row(static_cast<std::size_t>(n + 1), 1.0);
    for (int k = 1; k < n; ++k) row[static_cast<std::size_t>(k)] = t.back()[static_cast<std::size_t>(k - 1)] + t.back()[static_cast<std::size_t>(k)];
    t.push_back(row);
  }
  return t;
}

void expect_zero_residual(const KoopmanModel& model, const PolySystem& sys) {
  for (const auto& r : closure_residual(model, sys)) EXPECT_TRUE(r.is_zero()) << r.to_string();
}

}  // namespace

TEST(Monomials, GradedOrderAndCount) {
  const ObservableLibrary lib = monomials(2, 2);
  EXPECT_EQ(lib.labels(), (std::vector<std::string>{"x1", "x2", "x1^2", "x1*x2", "x2^2"}));
  for (std::size_t n = 1; n <= 4; ++n) {
    for (int d = 1; d <= 4; ++d) {
      // C(n + d, d) - 1 monomials of degree 1..d.
      double count = 1.0;
      for (int i = 1; i <= d; ++i) count = count * static_cast<double>(n + static_cast<std::size_t>(i)) / i;
      EXPECT_EQ(static_cast<double>(monomials(n, d).size()), count - 1.0);
    }
  }
  EXPECT_THROW((void)monomials(2, 0), InvalidArgument);
}

TEST(Library, RejectsDuplicatesAndEvaluates) {
  EXPECT_THROW(ObservableLibrary::from_exponents(2, {{1, 0}, {1, 0}}), InvalidArgument);
  const ObservableLibrary lib(1, {Observable::monomial({1}), Observable::exp_neg_inv(0)});
  const Vec y = lib.evaluate(Vec::Constant(1, 0.5));
  EXPECT_DOUBLE_EQ(y(0), 0.5);
  EXPECT_DOUBLE_EQ(y(1), std::exp(-2.0));
  EXPECT_DOUBLE_EQ(lib.evaluate(Vec::Zero(1))(1), 0.0);
  EXPECT_THROW((void)lib.evaluate(Vec::Constant(1, -1.0)), InvalidArgument);
  EXPECT_EQ(lib.labels()[1], "exp(-1/x1)");
  EXPECT_EQ(lib.find_label("exp(-1/x1)"), std::optional<std::size_t>(1));
}

TEST(SlowManifoldLift, QuadraticMatrix) {
  const double mu = -0.05;
  const double lambda = -1.0;
  const KoopmanModel m = slow_manifold_lift_ct(mu, lambda, {{1.0, 2}});
  Mat expected(3, 3);
  expected << mu, 0, 0, 0, lambda, -lambda, 0, 0, 2 * mu;
  EXPECT_EQ(m.K, expected);
  EXPECT_EQ(m.library.labels(), (std::vector<std::string>{"x1", "x2", "x1^2"}));
  expect_zero_residual(m, builtin("quad-manifold"));
}

TEST(SlowManifoldLift, QuarticMatrix) {
  const double mu = -0.05;
  const double lambda = -1.0;
  const KoopmanModel m = slow_manifold_lift_ct(mu, lambda, {{1.0, 4}, {-2.0, 2}});
  Mat expected(4, 4);
  expected << mu, 0, 0, 0,
              0, lambda, 2 * lambda, -lambda,
              0, 0, 2 * mu, 0,
              0, 0, 0, 4 * mu;
  EXPECT_EQ(m.K, expected);
  expect_zero_residual(m, builtin("quartic-manifold"));
}

TEST(SlowManifoldLift, DiscreteMatrixAndDuplicates) {
  const KoopmanModel m = slow_manifold_lift_dt(0.9, 0.1, {{1.0, 2}});
  Mat expected(3, 3);
  expected << 0.9, 0, 0, 0, 0.1, 0.9, 0, 0, 0.9 * 0.9;
  EXPECT_LT((m.K - expected).cwiseAbs().maxCoeff(), 1e-15);
  expect_zero_residual(m, builtin("slow-manifold-dt"));
  EXPECT_THROW((void)slow_manifold_lift_ct(-1.0, 1.0, {{1.0, 2}, {2.0, 2}}), InvalidArgument);
}

TEST(SlowManifoldLift, LinearTermFoldsIntoStateColumn) {
  const KoopmanModel m = slow_manifold_lift_ct(-0.5, -2.0, {{3.0, 1}, {1.0, 2}});
  EXPECT_EQ(m.size(), 3u);
  EXPECT_DOUBLE_EQ(m.K(1, 0), 6.0);
  const PolySystem sys = slow_manifold_system(-0.5, -2.0, {{3.0, 1}, {1.0, 2}});
  expect_zero_residual(m, sys);
}

TEST(TuLift, MatrixAndResidual) {
  const KoopmanModel m = tu_lift(0.9, 0.5);
  Mat expected(3, 3);
  expected << 0.9, 0, 0, 0, 0.5, 0.81 - 0.5, 0, 0, 0.81;
  EXPECT_LT((m.K - expected).cwiseAbs().maxCoeff(), 1e-15);
  expect_zero_residual(m, builtin("tu-map"));
}

TEST(Propagation, LiftMatchesNonlinearSimulation) {
  const PolySystem sys = builtin("quad-manifold");
  const KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  for (const Vec& x0 : {Vec{{1.5, -1.0}}, Vec{{1.0, -1.0}}, Vec{{2.0, -1.0}}}) {
    const Trajectory traj = integrate(sys, x0, 10.0, 0.01);
    const Mat y = propagate(m, lift_state(m, x0), traj.size() - 1, 0.01);
    EXPECT_LT((y.topRows(2) - traj.states).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Propagation, DiscreteLiftIsExact) {
  const PolySystem sys = builtin("tu-map");
  const KoopmanModel m = tu_lift(0.9, 0.5);
  const Vec x0{{1.3, 0.4}};
  const Trajectory traj = iterate(sys, x0, 25);
  const Mat y = propagate(m, lift_state(m, x0), 25);
  EXPECT_LT((y.topRows(2) - traj.states).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Carleman, LogisticRowsArePascalRows) {
  const auto tri = pascal(8);
  for (double r : {3.5, 2.0, 0.75}) {
    for (int n = 1; n <= 8; ++n) {
      const auto row = carleman_logistic_row(r, n);
      double sum = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double expected = (k % 2 ? -1.0 : 1.0) * tri[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] * std::pow(r, n);
        EXPECT_EQ(row[static_cast<std::size_t>(k)], expected);
        sum += row[static_cast<std::size_t>(k)];
      }
      EXPECT_EQ(sum, 0.0);
    }
  }
}

TEST(Carleman, LogisticTruncationLayout) {
  const KoopmanModel m = carleman_logistic(3.5, 4);
  Mat expected = Mat::Zero(4, 4);
  expected.row(0) << 3.5, -3.5, 0, 0;
  expected.row(1) << 0, 12.25, -24.5, 12.25;
  expected.row(2) << 0, 0, 42.875, -128.625;
  expected.row(3) << 0, 0, 0, 150.0625;
  EXPECT_EQ(m.K, expected);
  EXPECT_EQ(m.time_kind, TimeKind::Discrete);
}

TEST(Carleman, CenterTruncationIsSingular) {
  for (int rank : {1, 2, 4, 8, 12}) {
    const KoopmanModel m = carleman_center(rank);
    EXPECT_EQ(m.K.determinant(), 0.0);
    for (int i = 1; i < rank; ++i) EXPECT_EQ(m.K(i - 1, i), i);
    EXPECT_EQ(m.K.row(rank - 1).norm(), 0.0);
  }
}

TEST(Carleman, CenterPredictionIsTaylorPolynomial) {
  // exp(K t) y0 in the first coordinate is x0 sum_{k<m} (x0 t)^k.
  const double x0 = 0.5;
  const double t = 1.2;
  for (int rank : {4, 8}) {
    const KoopmanModel m = carleman_center(rank);
    const Vec y = expm(m.K, t) * lift_state(m, Vec::Constant(1, x0));
    double taylor = 0.0;
    for (int k = 0; k < rank; ++k) taylor += x0 * std::pow(x0 * t, k);
    EXPECT_NEAR(y(0), taylor, 1e-12);
  }
}

TEST(Carleman, HorizonMonotoneInRank) {
  const auto exact = [](double t) { return Vec::Constant(1, 0.5 / (1.0 - 0.5 * t)); };
  double prev = 0.0;
  for (int rank : {2, 4, 6, 8, 10, 12}) {
    const double h = prediction_horizon(carleman_center(rank), Vec::Constant(1, 0.5), exact, 1.9, 0.01);
    EXPECT_GE(h, prev);
    prev = h;
  }
}

TEST(Closure, CompletesPolynomialSystems) {
  EXPECT_EQ(closed_lift(builtin("quad-manifold"))->size(), 3u);
  EXPECT_EQ(closed_lift(builtin("quartic-manifold"))->size(), 4u);
  EXPECT_EQ(closed_lift(builtin("tu-map"))->size(), 3u);
  EXPECT_EQ(closed_lift(builtin("kooc-demo"))->size(), 3u);
  EXPECT_FALSE(closed_lift(builtin("logistic")).has_value());
  EXPECT_FALSE(closed_lift(builtin("center-manifold")).has_value());
}

TEST(Closure, ClosedLiftEqualsHandBuiltLift) {
  const KoopmanModel a = *closed_lift(builtin("quartic-manifold"));
  const KoopmanModel b = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 4}, {-2.0, 2}});
  EXPECT_EQ(a.library.labels(), b.library.labels());
  EXPECT_LT((a.K - b.K).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Closure, ResidualDetectsWrongModel) {
  KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  m.K(1, 2) = 0.0;
  const auto res = closure_residual(m, builtin("quad-manifold"));
  EXPECT_FALSE(res[1].is_zero());
  EXPECT_TRUE(res[0].is_zero());
}

TEST(KoopmanModel, ValidateCatchesBadShapes) {
  KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  m.K = Mat::Zero(2, 2);
  EXPECT_THROW(m.validate(), DimensionError);
}
