#pragma once

// Dense linear algebra kernel: least squares, SVD and pseudoinverse,
// eigendecomposition with left and right eigenvectors.
//
// Matrices are plain Eigen dense types. Every public entry point checks
// shapes and finiteness before doing any work.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "koopmankit/errors.hpp"

namespace koopmankit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Default relative cutoff on singular values for rank decisions.
inline constexpr double kDefaultRcond = 1e-12;

template <typename Derived>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!all_finite(m)) throw NonFiniteError(what + ": non-finite entry");
}

inline void require_square(const Mat& m, const std::string& what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(what + ": expected a square matrix, got " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()));
  }
}

struct SvdResult {
  Mat U;       // rows x k, orthonormal columns
  Vec sigma;   // k singular values, descending, non-negative
  Mat V;       // cols x k, orthonormal columns
};

/// Thin SVD, A = U diag(sigma) V^T with k = min(rows, cols).
[[nodiscard]] inline SvdResult svd(const Mat& a) {
  require_finite(a, "svd");
  if (a.size() == 0) return {Mat(a.rows(), 0), Vec(0), Mat(a.cols(), 0)};
  Eigen::JacobiSVD<Mat> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw ConvergenceError("svd: did not converge");
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

/// Number of singular values above rcond * sigma_max.
[[nodiscard]] inline Eigen::Index numerical_rank(const Vec& sigma, double rcond = kDefaultRcond) {
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  const double cut = rcond * sigma(0);
  Eigen::Index r = 0;
  while (r < sigma.size() && sigma(r) > cut) ++r;
  return r;
}

/// Moore-Penrose pseudoinverse with relative singular-value cutoff.
[[nodiscard]] inline Mat pinv(const Mat& a, double rcond = kDefaultRcond) {
  const SvdResult s = svd(a);
  const Eigen::Index r = numerical_rank(s.sigma, rcond);
  Mat out = Mat::Zero(a.cols(), a.rows());
  if (r == 0) return out;
  const Vec inv = s.sigma.head(r).cwiseInverse();
  out.noalias() = s.V.leftCols(r) * inv.asDiagonal() * s.U.leftCols(r).transpose();
  return out;
}

/// Minimum-norm X minimizing ||A X - B||_F.
[[nodiscard]] inline Mat lstsq(const Mat& a, const Mat& b, double rcond = kDefaultRcond) {
  if (a.rows() != b.rows()) {
    throw DimensionError("lstsq: A has " + std::to_string(a.rows()) + " rows, B has " +
                         std::to_string(b.rows()));
  }
  require_finite(a, "lstsq(A)");
  require_finite(b, "lstsq(B)");
  const SvdResult s = svd(a);
  const Eigen::Index r = numerical_rank(s.sigma, rcond);
  Mat x = Mat::Zero(a.cols(), b.cols());
  if (r == 0) return x;
  Mat utb = s.U.leftCols(r).transpose() * b;
  utb = s.sigma.head(r).cwiseInverse().asDiagonal() * utb;
  x.noalias() = s.V.leftCols(r) * utb;
  return x;
}

/// Eigenvalues with matching right (columns) and left (rows) eigenvectors.
///
/// Ordering: descending real part, ties broken by descending imaginary part,
/// so complex-conjugate pairs are adjacent. Each vector has unit 2-norm and
/// its phase is rotated so that the largest-magnitude entry is real and
/// positive (first such entry on ties).
struct EigenPairSet {
  CVec values;
  CMat right;  // column j pairs with values(j)
  CMat left;   // row j pairs with values(j): left.row(j) * K = values(j) * left.row(j)
};

namespace detail {

inline void normalize_phase(Eigen::Ref<CVec> v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  const double peak = v.cwiseAbs().maxCoeff();
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= peak * (1.0 - 1e-9)) {
      idx = i;
      break;
    }
  }
  const Complex phase = std::conj(v(idx)) / std::abs(v(idx));
  v *= phase;
  v(idx) = Complex(v(idx).real(), 0.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Real inputs produce real eigenvectors; clear rounding dust in the imaginary part.
    if (std::abs(v(i).imag()) < 1e-15) v(i) = Complex(v(i).real(), 0.0);
  }
}

inline std::vector<Eigen::Index> spectral_order(const CVec& values) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (values(a).real() != values(b).real()) return values(a).real() > values(b).real();
    return values(a).imag() > values(b).imag();
  });
  return order;
}

inline Eigen::EigenSolver<Mat> solve_eigen(const Mat& k, const char* what) {
  Eigen::EigenSolver<Mat> solver(k, true);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceError(std::string(what) + ": QR iteration did not converge");
  }
  return solver;
}

}  // namespace detail

/// Eigen-decomposition of a real square matrix. Left eigenvectors are right
/// eigenvectors of K^T, paired by nearest eigenvalue.
[[nodiscard]] inline EigenPairSet eig(const Mat& k) {
  require_square(k, "eig");
  require_finite(k, "eig");
  const Eigen::Index n = k.rows();
  EigenPairSet out{CVec(n), CMat(n, n), CMat(n, n)};
  if (n == 0) return out;

  const auto right = detail::solve_eigen(k, "eig");
  const Mat kt = k.transpose();
  const auto left = detail::solve_eigen(kt, "eig(left)");

  const CVec values = right.eigenvalues();
  const CMat rvecs = right.eigenvectors();
  const CVec lvalues = left.eigenvalues();
  const CMat lvecs = left.eigenvectors();

  const auto order = detail::spectral_order(values);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values(j) = values(src);
    out.right.col(j) = rvecs.col(src);
    detail::normalize_phase(out.right.col(j));

    Eigen::Index best = -1;
    double best_dist = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = std::abs(lvalues(i) - values(src));
      if (best < 0 || d < best_dist) {
        best = i;
        best_dist = d;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    CVec lv = lvecs.col(best);
    detail::normalize_phase(lv);
    out.left.row(j) = lv.transpose();
  }
  return out;
}

/// Index of the eigenvalue nearest to `target`; throws DegenerateSpectrum when
/// no eigenvalue lies within rel_tol or when the match is not simple.
[[nodiscard]] inline Eigen::Index match_eigenvalue(const CVec& values, Complex target,
                                                   double rel_tol = 1e-8) {
  const double scale = std::max({1.0, std::abs(target), values.size() ? values.cwiseAbs().maxCoeff() : 0.0});
  Eigen::Index best = -1;
  int hits = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::abs(values(i) - target) <= rel_tol * scale) {
      ++hits;
      if (best < 0 || std::abs(values(i) - target) < std::abs(values(best) - target)) best = i;
    }
  }
  if (hits == 0) throw DegenerateSpectrum("no eigenvalue matches the requested value");
  if (hits > 1) throw DegenerateSpectrum("requested eigenvalue is not simple");
  return best;
}

/// Matrix exponential exp(A t).
[[nodiscard]] inline Mat expm(const Mat& a, double t = 1.0) {
  require_square(a, "expm");
  const Mat at = a * t;
  return at.exp();
}

}  // namespace koopmankit
