#pragma once

// Koopman eigenfunctions from left eigenvectors of finite models, their
// verification along trajectories, and linear changes of coordinates on a
// lifted model.

#include <cmath>
#include <string>
#include <vector>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/errors.hpp"
#include "koopmankit/identification.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/numerics.hpp"

namespace koopmankit {

/// phi(x) = coeffs . y(x), where y are the model coordinates.
struct Eigenfunction {
  Complex eigenvalue;
  CVec coeffs;
  ObservableLibrary library;
  Mat coordinates;  // empty: coordinates are the library itself
  TimeKind time_kind = TimeKind::Continuous;

  [[nodiscard]] Complex operator()(const Eigen::Ref<const Vec>& x) const {
    Vec y = library.evaluate(x);
    if (coordinates.size() > 0) y = coordinates * y;
    return coeffs.transpose() * y.cast<Complex>();
  }
};

/// One eigenfunction per left eigenpair of K, in eig() order.
[[nodiscard]] inline std::vector<Eigenfunction> eigenfunctions(const KoopmanModel& model) {
  model.validate();
  const EigenPairSet pairs = eig(model.K);
  std::vector<Eigenfunction> out;
  for (Eigen::Index j = 0; j < pairs.values.size(); ++j) {
    out.push_back({pairs.values(j), pairs.left.row(j).transpose(), model.library, model.coordinates, model.time_kind});
  }
  return out;
}

/// Single eigenfunction whose eigenvalue matches `value`.
[[nodiscard]] inline Eigenfunction eigenfunction_for(const KoopmanModel& model, Complex value) {
  const auto all = eigenfunctions(model);
  CVec values(static_cast<Eigen::Index>(all.size()));
  for (std::size_t i = 0; i < all.size(); ++i) values(static_cast<Eigen::Index>(i)) = all[i].eigenvalue;
  return all[static_cast<std::size_t>(match_eigenvalue(values, value))];
}

/// Relative eigen-defect along a trajectory: RMS|d/dt phi - lambda phi| / RMS|phi|
/// (continuous; central differences on interior samples) or
/// RMS|phi(x_{k+1}) - lambda phi(x_k)| / RMS|phi(x_k)| (discrete).
[[nodiscard]] inline double verify_eigenfunction(const Eigenfunction& phi, const Trajectory& traj) {
  if (static_cast<std::size_t>(traj.dim()) != phi.library.dim()) throw DimensionError("verify_eigenfunction: state dimension mismatch");
  const Eigen::Index n = traj.size();
  CVec values(n);
  for (Eigen::Index k = 0; k < n; ++k) values(k) = phi(traj.states.col(k));

  double num = 0.0;
  double den = 0.0;
  if (phi.time_kind == TimeKind::Continuous) {
    if (n < 5) throw InvalidArgument("verify_eigenfunction: need at least 5 samples");
    const double dt = uniform_step(traj);
    Mat parts(2, n);
    parts.row(0) = values.real().transpose();
    parts.row(1) = values.imag().transpose();
    const Mat rates = finite_difference(parts, dt);
    for (Eigen::Index k = 2; k < n - 2; ++k) {
      const Complex rate(rates(0, k), rates(1, k));
      num += std::norm(rate - phi.eigenvalue * values(k));
      den += std::norm(values(k));
    }
  } else {
    if (n < 2) throw InvalidArgument("verify_eigenfunction: need at least 2 samples");
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      num += std::norm(values(k + 1) - phi.eigenvalue * values(k));
      den += std::norm(values(k));
    }
  }
  if (den == 0.0) throw InvalidArgument("verify_eigenfunction: phi vanishes along the trajectory; uninformative data");
  return std::sqrt(num / den);
}

namespace detail {

inline void require_planar_state_model(const KoopmanModel& model, const char* what) {
  model.validate();
  if (model.library.dim() != 2 || model.state_rows != std::vector<std::size_t>{0, 1}) {
    throw InvalidArgument(std::string(what) + ": needs a 2-state model with state rows {0, 1}");
  }
}

// K' = T K T^-1 with coordinates composed as T * C.
inline KoopmanModel apply_similarity(const KoopmanModel& model, const Mat& t) {
  Eigen::FullPivLU<Mat> lu(t);
  if (!lu.isInvertible()) throw InvalidArgument("coordinate change is singular");
  KoopmanModel out = model;
  out.K = t * model.K * lu.inverse();
  out.coordinates = model.has_coordinates() ? Mat(t * model.coordinates) : t;
  return out;
}

}  // namespace detail

/// Change the state coordinates of a state-inclusive model by an invertible
/// n x n map z = T x; the remaining coordinates are unchanged.
[[nodiscard]] inline KoopmanModel transform_state_coordinates(const KoopmanModel& model, const Mat& t) {
  model.validate();
  const auto n = static_cast<Eigen::Index>(model.library.dim());
  if (t.rows() != n || t.cols() != n) throw DimensionError("transform_state_coordinates: T must be n x n");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (model.state_rows.size() != static_cast<std::size_t>(n) || model.state_rows[static_cast<std::size_t>(i)] != static_cast<std::size_t>(i)) {
      throw InvalidArgument("transform_state_coordinates: model must have leading state rows");
    }
  }
  Mat full = Mat::Identity(model.K.rows(), model.K.cols());
  full.topLeftCorner(n, n) = t;
  return detail::apply_similarity(model, full);
}

/// Rotate the planar state coordinates: eta = c x1 + s x2, xi = -s x1 + c x2.
[[nodiscard]] inline KoopmanModel rotate_model(const KoopmanModel& model, double angle) {
  detail::require_planar_state_model(model, "rotate_model");
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat r(2, 2);
  r << c, s, -s, c;
  return transform_state_coordinates(model, r);
}

/// Sum/difference coordinates eta = x1 + x2, xi = x1 - x2 (a 45 degree rotation
/// scaled by sqrt(2) with the second axis reflected).
[[nodiscard]] inline Mat sum_difference_map() {
  Mat t(2, 2);
  t << 1.0, 1.0, 1.0, -1.0;
  return t;
}

/// Replace the non-state coordinates by eigen-observables for the given real
/// eigenvalues. Each eigen-observable is scaled so that its largest-magnitude
/// state coefficient equals 1.
[[nodiscard]] inline KoopmanModel eigen_coordinates(const KoopmanModel& model, const std::vector<double>& eigenvalues) {
  model.validate();
  const auto m = static_cast<Eigen::Index>(model.size());
  const auto n = static_cast<Eigen::Index>(model.state_rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (model.state_rows[static_cast<std::size_t>(i)] != static_cast<std::size_t>(i)) {
      throw InvalidArgument("eigen_coordinates: model must have leading state rows");
    }
  }
  if (static_cast<Eigen::Index>(eigenvalues.size()) != m - n) {
    throw InvalidArgument("eigen_coordinates: need exactly one eigenvalue per non-state coordinate");
  }
  const EigenPairSet pairs = eig(model.K);
  Mat t = Mat::Identity(m, m);
  for (std::size_t e = 0; e < eigenvalues.size(); ++e) {
    const Eigen::Index idx = match_eigenvalue(pairs.values, Complex(eigenvalues[e], 0.0));
    const CVec xi = pairs.left.row(idx).transpose();
    if (xi.imag().cwiseAbs().maxCoeff() > 1e-12) throw InvalidArgument("eigen_coordinates: eigenvector is not real");
    Vec row = xi.real();
    Eigen::Index pivot = 0;
    const double peak = n > 0 ? row.head(n).cwiseAbs().maxCoeff(&pivot) : 0.0;
    if (peak == 0.0) row.cwiseAbs().maxCoeff(&pivot);
    row /= row(pivot);
    t.row(n + static_cast<Eigen::Index>(e)) = row.transpose();
  }
  return detail::apply_similarity(model, t);
}

/// Ratio y3/y2 of the right eigenvector for the eigenvalue 2 * K(0,0) of a
/// lift on [x1, x2, x1^2]; the eigenvalue is located by value, not by index.
[[nodiscard]] inline double slow_subspace_slope(const KoopmanModel& model) {
  model.validate();
  if (model.size() != 3) throw InvalidArgument("slow_subspace_slope: expects a 3-coordinate quadratic lift");
  const EigenPairSet pairs = eig(model.K);
  const Eigen::Index idx = match_eigenvalue(pairs.values, Complex(2.0 * model.K(0, 0), 0.0));
  const CVec v = pairs.right.col(idx);
  if (std::abs(v(1)) < 1e-14) throw DegenerateSpectrum("slow_subspace_slope: eigenvector has no y2 component");
  return (v(2) / v(1)).real();
}

}  // namespace koopmankit
