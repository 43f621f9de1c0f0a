#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "koopmankit/numerics.hpp"

using namespace koopmankit;

namespace {

Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

}  // namespace

TEST(Svd, ReconstructsAndIsOrdered) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_matrix(3 + trial % 4, 2 + trial % 3, rng);
    const SvdResult s = svd(a);
    EXPECT_LT((s.U * s.sigma.asDiagonal() * s.V.transpose() - a).norm(), 1e-12 * a.norm());
    for (Eigen::Index i = 1; i < s.sigma.size(); ++i) EXPECT_GE(s.sigma(i - 1), s.sigma(i));
    EXPECT_LT((s.U.transpose() * s.U - Mat::Identity(s.U.cols(), s.U.cols())).norm(), 1e-12);
    EXPECT_LT((s.V.transpose() * s.V - Mat::Identity(s.V.cols(), s.V.cols())).norm(), 1e-12);
  }
}

TEST(Pinv, MoorePenroseConditions) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    // Rank-deficient by construction.
    const Mat a = random_matrix(5, 2, rng) * random_matrix(2, 4, rng);
    const Mat p = pinv(a);
    EXPECT_LT((a * p * a - a).norm(), 1e-10);
    EXPECT_LT((p * a * p - p).norm(), 1e-10);
    EXPECT_LT((a * p - (a * p).transpose()).norm(), 1e-10);
    EXPECT_LT((p * a - (p * a).transpose()).norm(), 1e-10);
  }
}

TEST(Lstsq, MatchesNormalEquationsOnFullRank) {
  std::mt19937 rng(3);
  const Mat a = random_matrix(30, 4, rng);
  const Mat b = random_matrix(30, 2, rng);
  const Mat oracle = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  EXPECT_LT((lstsq(a, b) - oracle).norm(), 1e-12);
}

TEST(Lstsq, MinimumNormOnRankDeficient) {
  std::mt19937 rng(4);
  const Mat a = random_matrix(8, 2, rng) * random_matrix(2, 3, rng);
  const Mat b = random_matrix(8, 1, rng);
  const Mat x = lstsq(a, b);
  // Minimum-norm solutions lie in the row space of A.
  const SvdResult s = svd(a);
  const Mat null_dir = s.V.col(2);
  EXPECT_LT(std::abs((null_dir.transpose() * x)(0, 0)), 1e-10);
  // Normal equations hold.
  EXPECT_LT((a.transpose() * (a * x - b)).norm(), 1e-10);
}

TEST(Lstsq, RejectsBadInput) {
  EXPECT_THROW((void)lstsq(Mat::Ones(3, 2), Mat::Ones(4, 1)), DimensionError);
  Mat bad = Mat::Ones(3, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW((void)lstsq(bad, Mat::Ones(3, 1)), NonFiniteError);
}

TEST(Eig, RightAndLeftPairs) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat k = random_matrix(5, 5, rng);
    const EigenPairSet p = eig(k);
    const CMat kc = k.cast<Complex>();
    for (Eigen::Index j = 0; j < 5; ++j) {
      EXPECT_LT((kc * p.right.col(j) - p.values(j) * p.right.col(j)).norm(), 1e-9);
      EXPECT_LT((p.left.row(j) * kc - p.values(j) * p.left.row(j)).norm(), 1e-9);
      EXPECT_NEAR(p.right.col(j).norm(), 1.0, 1e-12);
      EXPECT_NEAR(p.left.row(j).norm(), 1.0, 1e-12);
    }
    for (Eigen::Index j = 1; j < 5; ++j) {
      const Complex a = p.values(j - 1);
      const Complex b = p.values(j);
      EXPECT_TRUE(a.real() > b.real() + 1e-12 || (std::abs(a.real() - b.real()) <= 1e-12 && a.imag() >= b.imag()));
    }
  }
}

TEST(Eig, PhaseNormalization) {
  Mat k(2, 2);
  k << 0.0, -1.0, 1.0, 0.0;
  const EigenPairSet p = eig(k);
  EXPECT_NEAR(p.values(0).imag(), 1.0, 1e-14);
  EXPECT_NEAR(p.values(1).imag(), -1.0, 1e-14);
  for (Eigen::Index j = 0; j < 2; ++j) {
    Eigen::Index idx = 0;
    p.right.col(j).cwiseAbs().maxCoeff(&idx);
    EXPECT_GT(p.right(idx, j).real(), 0.0);
    EXPECT_NEAR(p.right(idx, j).imag(), 0.0, 1e-14);
  }
}

TEST(Eig, DiagonalOrder) {
  const Mat k = Vec{{-1.0, 0.5, -0.1}}.asDiagonal();
  const EigenPairSet p = eig(k);
  EXPECT_DOUBLE_EQ(p.values(0).real(), 0.5);
  EXPECT_DOUBLE_EQ(p.values(1).real(), -0.1);
  EXPECT_DOUBLE_EQ(p.values(2).real(), -1.0);
}

TEST(MatchEigenvalue, FindsSimpleAndRejectsRepeated) {
  const CVec v = Vec{{1.0, 2.0, 2.0, 3.0}}.cast<Complex>();
  EXPECT_EQ(match_eigenvalue(v, Complex(3.0, 0.0)), 3);
  EXPECT_THROW((void)match_eigenvalue(v, Complex(2.0, 0.0)), DegenerateSpectrum);
  EXPECT_THROW((void)match_eigenvalue(v, Complex(5.0, 0.0)), DegenerateSpectrum);
}

TEST(Expm, NilpotentAndDiagonal) {
  Mat n(2, 2);
  n << 0.0, 1.0, 0.0, 0.0;
  Mat expected(2, 2);
  expected << 1.0, 2.5, 0.0, 1.0;
  EXPECT_LT((expm(n, 2.5) - expected).norm(), 1e-14);

  const Mat d = Vec{{-0.05, 1.0}}.asDiagonal();
  const Mat e = expm(d, 10.0);
  EXPECT_NEAR(e(0, 0), std::exp(-0.5), 1e-14);
  EXPECT_NEAR(e(1, 1), std::exp(10.0), 1e-9);
}

TEST(Expm, SemigroupProperty) {
  std::mt19937 rng(6);
  const Mat a = random_matrix(4, 4, rng);
  EXPECT_LT((expm(a, 0.3) * expm(a, 0.7) - expm(a, 1.0)).norm(), 1e-11 * expm(a, 1.0).norm());
}

TEST(Checks, FiniteAndSquare) {
  Mat m = Mat::Zero(2, 3);
  EXPECT_TRUE(all_finite(m));
  EXPECT_THROW(require_square(m, "m"), DimensionError);
  m(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(all_finite(m));
  EXPECT_THROW(require_finite(m, "m"), NonFiniteError);
}
