#include <cmath>

#include <gtest/gtest.h>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/spectral.hpp"

using namespace koopmankit;

namespace {

std::vector<double> sorted_real(const CVec& v) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i).real());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Eigenfunctions, SlowManifoldCoefficient) {
  for (const auto& [mu, lambda] : std::vector<std::pair<double, double>>{{-0.05, -1.0}, {-0.1, 1.0}, {0.3, -2.0}}) {
    const KoopmanModel m = slow_manifold_lift_ct(mu, lambda, {{1.0, 2}});
    const Eigenfunction phi = eigenfunction_for(m, Complex(lambda, 0.0));
    const double b = lambda / (lambda - 2.0 * mu);
    EXPECT_NEAR(phi.coeffs(0).real(), 0.0, 1e-15);
    EXPECT_NEAR((phi.coeffs(2) / phi.coeffs(1)).real(), -b, 1e-12);
  }
}

TEST(Eigenfunctions, LeftEigenvectorIdentity) {
  const KoopmanModel m = *closed_lift(builtin("quartic-manifold"));
  for (const auto& phi : eigenfunctions(m)) {
    const CVec lhs = m.K.cast<Complex>().transpose() * phi.coeffs;
    EXPECT_LT((lhs - phi.eigenvalue * phi.coeffs).norm(), 1e-12);
  }
}

TEST(Eigenfunctions, ResidualAlongTrajectories) {
  const PolySystem sys = builtin("quad-manifold");
  const KoopmanModel m = *closed_lift(sys);
  for (const Vec& x0 : {Vec{{1.5, -1.0}}, Vec{{-2.0, 3.0}}}) {
    const Trajectory t = integrate(sys, x0, 10.0, 0.01);
    for (const auto& phi : eigenfunctions(m)) EXPECT_LT(verify_eigenfunction(phi, t), 1e-6);
  }
}

TEST(Eigenfunctions, DiscreteSlowManifold) {
  const double mu = 0.9;
  const double lambda = 0.1;
  const KoopmanModel m = slow_manifold_lift_dt(mu, lambda, {{1.0, 2}});
  const Eigenfunction phi = eigenfunction_for(m, Complex(lambda, 0.0));
  EXPECT_NEAR((phi.coeffs(2) / phi.coeffs(1)).real(), -(1.0 - lambda) / (mu * mu - lambda), 1e-12);
  const Trajectory t = iterate(builtin("slow-manifold-dt"), Vec{{1.0, 2.0}}, 30);
  EXPECT_LT(verify_eigenfunction(phi, t), 1e-12);
}

TEST(Eigenfunctions, TuMapMuEigenvector) {
  const Eigenfunction phi = eigenfunction_for(tu_lift(0.9, 0.5), Complex(0.5, 0.0));
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(phi.coeffs(0)), 0.0, 1e-15);
  EXPECT_NEAR(phi.coeffs(1).real(), s, 1e-15);
  EXPECT_NEAR(phi.coeffs(2).real(), -s, 1e-15);
}

TEST(Eigenfunctions, ComplexPair) {
  Mat a(2, 2);
  a << -0.2, -2.0, 2.0, -0.2;
  const PolySystem sys = linear_system(a, TimeKind::Continuous);
  const KoopmanModel m{monomials(2, 1), a, TimeKind::Continuous, {0, 1}, {}};
  const Trajectory t = integrate(sys, Vec{{1.0, 0.5}}, 5.0, 0.005);
  const auto phis = eigenfunctions(m);
  ASSERT_EQ(phis.size(), 2u);
  EXPECT_GT(phis[0].eigenvalue.imag(), 0.0);
  for (const auto& phi : phis) EXPECT_LT(verify_eigenfunction(phi, t), 1e-8);
}

TEST(Eigenfunctions, ExpNegInvOnCenterManifold) {
  const PolySystem sys = builtin("center-manifold");
  const Eigenfunction phi{Complex(1.0, 0.0), CVec::Ones(1), ObservableLibrary(1, {Observable::exp_neg_inv(0)}), {},
                          TimeKind::Continuous};
  for (double x0 : {0.25, 0.5}) {
    const Trajectory t = integrate(sys, Vec::Constant(1, x0), 0.9 / x0, 0.001);
    EXPECT_LT(verify_eigenfunction(phi, t), 1e-4);
  }
}

TEST(Eigenfunctions, VanishingObservableIsUninformative) {
  const KoopmanModel m = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  const Trajectory t = integrate(builtin("quad-manifold"), Vec{{0.0, 1.0}}, 1.0, 0.01);
  EXPECT_THROW((void)verify_eigenfunction(eigenfunction_for(m, Complex(-0.05, 0.0)), t), InvalidArgument);
}

TEST(SlowSubspace, SlopeFormulaAndLimit) {
  for (const auto& [mu, lambda] : std::vector<std::pair<double, double>>{{-0.05, -1.0}, {-0.05, 1.0}, {-1.0, -10.0}}) {
    EXPECT_NEAR(slow_subspace_slope(slow_manifold_lift_ct(mu, lambda, {{1.0, 2}})), (lambda - 2.0 * mu) / lambda, 1e-12);
  }
  EXPECT_NEAR(slow_subspace_slope(slow_manifold_lift_ct(-1e-4, -1.0, {{1.0, 2}})), 1.0, 1e-3);
}

TEST(Coordinates, SumDifferenceEigenCoordinatesMatchClosedForm) {
  const double mu = -0.05;
  const double lambda = -1.0;
  const KoopmanModel base = slow_manifold_lift_ct(mu, lambda, {{1.0, 2}});
  const KoopmanModel z = transform_state_coordinates(eigen_coordinates(base, {lambda}), sum_difference_map());
  Mat expected(3, 3);
  expected << 1.5 * mu, -0.5 * mu, lambda - 2 * mu,
              -0.5 * mu, 1.5 * mu, -(lambda - 2 * mu),
              0, 0, lambda;
  EXPECT_LT((z.K - expected).cwiseAbs().maxCoeff(), 1e-12);

  // The composed coordinates evaluate to eta, xi and phi_lambda.
  const Vec x{{0.7, -0.4}};
  const Vec y = lift_state(z, x);
  const double b = lambda / (lambda - 2 * mu);
  EXPECT_NEAR(y(0), x(0) + x(1), 1e-14);
  EXPECT_NEAR(y(1), x(0) - x(1), 1e-14);
  EXPECT_NEAR(y(2), x(1) - b * x(0) * x(0), 1e-14);
}

TEST(Coordinates, TransformedModelPredictsRotatedSystem) {
  const KoopmanModel base = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  const KoopmanModel z = transform_state_coordinates(eigen_coordinates(base, {-1.0}), sum_difference_map());
  const Vec x0{{1.5, -1.0}};
  const Trajectory t = integrate(builtin("rotated-quad"), Vec{{x0(0) + x0(1), x0(0) - x0(1)}}, 5.0, 0.01);
  const Mat y = propagate(z, lift_state(z, x0), t.size() - 1, 0.01);
  EXPECT_LT((y.topRows(2) - t.states).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Coordinates, EigenvaluesInvariantUnderRotation) {
  const KoopmanModel base = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  const auto ref = sorted_real(eig(base.K).values);
  for (double angle : {0.1, M_PI / 4, 1.0, 2.5}) {
    const auto got = sorted_real(eig(rotate_model(base, angle).K).values);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-10);
  }
}

TEST(Coordinates, RotationPreservesPrediction) {
  const KoopmanModel base = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  const double angle = M_PI / 4;
  const KoopmanModel r = rotate_model(base, angle);
  const Vec x0{{1.0, -1.0}};
  const Vec a = expm(base.K, 3.0) * lift_state(base, x0);
  const Vec b = expm(r.K, 3.0) * lift_state(r, x0);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  EXPECT_NEAR(b(0), c * a(0) + s * a(1), 1e-12);
  EXPECT_NEAR(b(1), -s * a(0) + c * a(1), 1e-12);
}

TEST(Coordinates, RejectsSingularMaps) {
  const KoopmanModel base = slow_manifold_lift_ct(-0.05, -1.0, {{1.0, 2}});
  EXPECT_THROW((void)transform_state_coordinates(base, Mat::Ones(2, 2)), InvalidArgument);
  EXPECT_THROW((void)eigen_coordinates(base, {-1.0, -0.1}), InvalidArgument);
}
