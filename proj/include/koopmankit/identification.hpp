#pragma once

// Data-driven identification: DMD, SINDy by sequential thresholded least
// squares, and refinement of the identified library into a closed Koopman
// subspace.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/errors.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/numerics.hpp"
#include "koopmankit/polynomial.hpp"

namespace koopmankit {

/// Paired snapshots: Y holds derivatives (continuous) or shifted states (discrete).
struct DataSet {
  Mat X;
  Mat Y;
  double dt = 1.0;
  TimeKind time_kind = TimeKind::Continuous;

  [[nodiscard]] Eigen::Index samples() const noexcept { return X.cols(); }

  void validate() const {
    if (X.rows() != Y.rows() || X.cols() != Y.cols()) throw DimensionError("dataset: X and Y shapes differ");
    require_finite(X, "dataset(X)");
    require_finite(Y, "dataset(Y)");
  }
};

/// Append the samples of `more` to `into`; both must share dimension and kind.
inline void append(DataSet& into, const DataSet& more) {
  if (into.X.size() == 0) {
    into = more;
    return;
  }
  if (into.X.rows() != more.X.rows() || into.time_kind != more.time_kind) {
    throw DimensionError("dataset: cannot concatenate incompatible data");
  }
  const Eigen::Index a = into.X.cols();
  const Eigen::Index b = more.X.cols();
  Mat x(into.X.rows(), a + b);
  Mat y(into.Y.rows(), a + b);
  x << into.X, more.X;
  y << into.Y, more.Y;
  into.X = std::move(x);
  into.Y = std::move(y);
}

/// Uniform sample spacing of a trajectory, or InvalidArgument.
[[nodiscard]] inline double uniform_step(const Trajectory& traj) {
  traj.validate();
  if (traj.size() < 2) throw InvalidArgument("trajectory: need at least two samples");
  const double dt = (traj.times(traj.size() - 1) - traj.times(0)) / static_cast<double>(traj.size() - 1);
  for (Eigen::Index k = 1; k < traj.size(); ++k) {
    if (std::abs((traj.times(k) - traj.times(k - 1)) - dt) > 1e-9 * std::max(1.0, dt)) {
      throw InvalidArgument("trajectory: non-uniform sampling");
    }
  }
  return dt;
}

/// Row-wise time derivative of uniformly sampled series (columns are samples):
/// fourth-order central differences in the interior, second-order stencils
/// at the two samples nearest each end.
[[nodiscard]] inline Mat finite_difference(const Mat& series, double dt) {
  const Eigen::Index n = series.cols();
  if (n < 5) throw InvalidArgument("finite_difference: need at least 5 samples");
  Mat d(series.rows(), n);
  const auto f = [&](Eigen::Index k) { return series.col(k); };
  d.col(0) = (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * dt);
  d.col(1) = (f(2) - f(0)) / (2.0 * dt);
  for (Eigen::Index k = 2; k < n - 2; ++k) {
    d.col(k) = (f(k - 2) - 8.0 * f(k - 1) + 8.0 * f(k + 1) - f(k + 2)) / (12.0 * dt);
  }
  d.col(n - 2) = (f(n - 1) - f(n - 3)) / (2.0 * dt);
  d.col(n - 1) = (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * dt);
  return d;
}

/// Continuous dataset from one trajectory: X = states, Y = estimated derivatives.
[[nodiscard]] inline DataSet estimate_derivatives(const Trajectory& traj) {
  const double dt = uniform_step(traj);
  if (traj.size() < 5) throw InvalidArgument("estimate_derivatives: need at least 5 samples");
  return {traj.states, finite_difference(traj.states, dt), dt, TimeKind::Continuous};
}

/// Discrete dataset from one trajectory: X = x_0..x_{N-2}, Y = x_1..x_{N-1}.
[[nodiscard]] inline DataSet shift_pairs(const Trajectory& traj) {
  traj.validate();
  if (traj.size() < 2) throw InvalidArgument("shift_pairs: need at least two samples");
  const Eigen::Index n = traj.size() - 1;
  return {traj.states.leftCols(n), traj.states.rightCols(n), 1.0, TimeKind::Discrete};
}

/// Dataset matching the trajectory's system kind, concatenated over trajectories.
[[nodiscard]] inline DataSet build_dataset(const std::vector<Trajectory>& trajs, TimeKind kind) {
  DataSet out;
  out.time_kind = kind;
  for (const auto& t : trajs) append(out, kind == TimeKind::Continuous ? estimate_derivatives(t) : shift_pairs(t));
  return out;
}

/// Best-fit linear operator Xi = Xp * pinv(X).
[[nodiscard]] inline Mat dmd(const Mat& x, const Mat& xp, double rcond = kDefaultRcond) {
  if (x.size() == 0 || xp.size() == 0) throw InvalidArgument("dmd: empty data");
  if (x.rows() != xp.rows() || x.cols() != xp.cols()) throw DimensionError("dmd: X and X' shapes differ");
  return lstsq(x.transpose(), xp.transpose(), rcond).transpose();
}

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Sparse coefficients Xi^T over a library: row k gives the k-th target.
struct SparseModel {
  ObservableLibrary library;
  Mat xi_t;  // n_out x m
  Mask mask;
  TimeKind time_kind = TimeKind::Continuous;
  double threshold = 0.0;

  [[nodiscard]] Eigen::Index outputs() const noexcept { return xi_t.rows(); }

  [[nodiscard]] std::vector<std::string> target_labels() const {
    std::vector<std::string> out;
    const bool continuous = time_kind == TimeKind::Continuous;
    for (Eigen::Index k = 0; k < xi_t.rows(); ++k) {
      out.push_back((continuous ? "d/dt x" : "next x") + std::to_string(k + 1));
    }
    return out;
  }

  /// Identified right-hand side (or map) as polynomials; needs a monomial library
  /// and one row per state.
  [[nodiscard]] std::vector<Polynomial> field() const {
    if (!library.all_monomial()) throw InvalidArgument("sparse model: library is not polynomial");
    if (static_cast<std::size_t>(xi_t.rows()) != library.dim()) {
      throw DimensionError("sparse model: rows do not correspond to states");
    }
    std::vector<Polynomial> out;
    for (Eigen::Index k = 0; k < xi_t.rows(); ++k) {
      Polynomial p(library.dim());
      for (Eigen::Index j = 0; j < xi_t.cols(); ++j) {
        if (mask(k, j)) p.add_term(library[static_cast<std::size_t>(j)].exponents, xi_t(k, j));
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  /// Library indices that are active in any row.
  [[nodiscard]] std::vector<std::size_t> active_columns() const {
    std::vector<std::size_t> out;
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask.col(j).any()) out.push_back(static_cast<std::size_t>(j));
    }
    return out;
  }

  void validate() const {
    if (mask.rows() != xi_t.rows() || mask.cols() != xi_t.cols()) throw DimensionError("sparse model: mask shape");
    if (static_cast<std::size_t>(xi_t.cols()) != library.size()) throw DimensionError("sparse model: width != library size");
    for (Eigen::Index k = 0; k < xi_t.rows(); ++k) {
      for (Eigen::Index j = 0; j < xi_t.cols(); ++j) {
        if (!mask(k, j) && xi_t(k, j) != 0.0) throw InvalidArgument("sparse model: masked entry is not zero");
      }
    }
  }
};

struct SindyOptions {
  double threshold = 0.025;
  int max_iter = 10;
  bool normalize = true;  // regress on unit-RMS library columns
};

namespace detail {

// Column RMS of a sample-major design matrix; zero columns get scale 1.
inline Vec column_scales(const Mat& design, bool normalize) {
  Vec s = Vec::Ones(design.cols());
  if (!normalize || design.rows() == 0) return s;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const double rms = design.col(j).norm() / std::sqrt(static_cast<double>(design.rows()));
    if (rms > 0.0) s(j) = rms;
  }
  return s;
}

// Least squares restricted to the active columns; returns scaled coefficients.
inline Vec solve_active(const Mat& scaled, const Vec& target, const Eigen::Array<bool, Eigen::Dynamic, 1>& active) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < active.size(); ++j) {
    if (active(j)) cols.push_back(j);
  }
  Vec full = Vec::Zero(scaled.cols());
  if (cols.empty()) return full;
  Mat sub(scaled.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = scaled.col(cols[c]);
  const Vec coef = lstsq(sub, target);
  for (std::size_t c = 0; c < cols.size(); ++c) full(cols[c]) = coef(static_cast<Eigen::Index>(c));
  return full;
}

}  // namespace detail

/// Sequential thresholded least squares. The threshold applies to the
/// coefficients of the unit-RMS-scaled library; returned coefficients are in
/// the original scaling.
[[nodiscard]] inline SparseModel sindy(const DataSet& data, const ObservableLibrary& lib, const SindyOptions& opt = {}) {
  data.validate();
  if (!(opt.threshold >= 0.0)) throw InvalidArgument("sindy: threshold must be non-negative");
  if (opt.max_iter < 1) throw InvalidArgument("sindy: max_iter must be at least 1");
  if (static_cast<std::size_t>(data.X.rows()) != lib.dim()) throw DimensionError("sindy: library dimension mismatch");
  if (data.samples() == 0) throw InvalidArgument("sindy: empty data");

  const Mat design = eval_library(lib, data.X).transpose();  // M x m
  const Vec scales = detail::column_scales(design, opt.normalize);
  const Mat scaled = design * scales.cwiseInverse().asDiagonal();
  const Eigen::Index m = design.cols();

  SparseModel model;
  model.library = lib;
  model.time_kind = data.time_kind;
  model.threshold = opt.threshold;
  model.xi_t = Mat::Zero(data.Y.rows(), m);
  model.mask = Mask::Constant(data.Y.rows(), m, true);

  for (Eigen::Index k = 0; k < data.Y.rows(); ++k) {
    const Vec target = data.Y.row(k).transpose();
    Eigen::Array<bool, Eigen::Dynamic, 1> active = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(m, true);
    Vec coef = detail::solve_active(scaled, target, active);
    for (int it = 0; it < opt.max_iter; ++it) {
      Eigen::Array<bool, Eigen::Dynamic, 1> next = active;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (std::abs(coef(j)) < opt.threshold) next(j) = false;
      }
      if (!next.any()) {
        throw InvalidArgument("sindy: every term of target " + std::to_string(k + 1) +
                              " fell below the threshold; threshold too large");
      }
      if ((next == active).all()) break;
      active = next;
      coef = detail::solve_active(scaled, target, active);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      model.mask(k, j) = active(j);
      model.xi_t(k, j) = active(j) ? coef(j) / scales(j) : 0.0;
    }
  }
  return model;
}

struct RefineOptions {
  int max_rounds = 8;
  bool sparse_refit = false;  // threshold the refit operator as well
  double threshold = 0.025;
};

struct RefinementResult {
  KoopmanModel model;
  bool converged = false;
  int rounds = 0;
  std::string message;
};

namespace detail {

// Time derivative of every observable by the chain rule on derivative samples.
inline Mat observable_rates(const ObservableLibrary& lib, const Mat& x, const Mat& xdot) {
  const auto m = static_cast<Eigen::Index>(lib.size());
  Mat out = Mat::Zero(m, x.cols());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const Polynomial g = lib.polynomial(i);
    for (std::size_t v = 0; v < lib.dim(); ++v) {
      const Polynomial dg = g.derivative(v);
      if (dg.is_zero()) continue;
      for (Eigen::Index s = 0; s < x.cols(); ++s) {
        out(static_cast<Eigen::Index>(i), s) += dg(x.col(s)) * xdot(static_cast<Eigen::Index>(v), s);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Grow the identified observables into a closed set by symbolic completion
/// under the identified dynamics, then regress the square operator on that set
/// from the data. Non-convergence is reported in the result, not thrown.
[[nodiscard]] inline RefinementResult refine_subspace(const SparseModel& sparse, const DataSet& data,
                                                      const RefineOptions& opt = {}) {
  sparse.validate();
  data.validate();
  if (data.time_kind != sparse.time_kind) throw InvalidArgument("refine_subspace: data and model time kinds differ");
  if (opt.max_rounds < 1) throw InvalidArgument("refine_subspace: max_rounds must be at least 1");
  const std::vector<Polynomial> field = sparse.field();

  std::vector<Exponents> seed;
  for (auto j : sparse.active_columns()) seed.push_back(sparse.library[j].exponents);
  const ClosureResult closure = complete_closure(field, sparse.time_kind, seed, opt.max_rounds);
  const ObservableLibrary lib = ObservableLibrary::from_exponents(sparse.library.dim(), closure.observables);

  DataSet lifted;
  lifted.time_kind = data.time_kind;
  lifted.dt = data.dt;
  lifted.X = eval_library(lib, data.X);
  lifted.Y = data.time_kind == TimeKind::Continuous ? detail::observable_rates(lib, data.X, data.Y)
                                                    : eval_library(lib, data.Y);

  Mat k;
  if (opt.sparse_refit) {
    // Regress each lifted coordinate on the lifted coordinates themselves.
    const ObservableLibrary identity_lib = monomials(lifted.X.rows(), 1);
    k = sindy(lifted, identity_lib, {opt.threshold, 10, true}).xi_t;
  } else {
    const Mat design = lifted.X.transpose();
    const Vec scales = detail::column_scales(design, true);
    const Mat coef = lstsq(design * scales.cwiseInverse().asDiagonal(), lifted.Y.transpose());
    k = (scales.cwiseInverse().asDiagonal() * coef).transpose();
  }

  RefinementResult result;
  result.model = {lib, k, data.time_kind, detail::leading_rows(lib.dim()), {}};
  result.converged = closure.closed;
  result.rounds = closure.rounds;
  result.message = closure.closed ? "observable set closed after " + std::to_string(closure.rounds) + " round(s)"
                                  : "observable set still growing after " + std::to_string(closure.rounds) +
                                        " round(s); last size " + std::to_string(lib.size());
  return result;
}

struct IdentifyOptions {
  int d_max = 2;
  SindyOptions sindy;
  RefineOptions refine;
};

struct Identification {
  SparseModel sparse;
  RefinementResult refined;
};

/// Library regression followed by subspace refinement. With d_max = 1 the
/// regression is the unthresholded least-squares fit Xi = Y X^+ (DMD) and the
/// refined model is that linear operator on the states.
[[nodiscard]] inline Identification identify(const DataSet& data, const IdentifyOptions& opt = {}) {
  data.validate();
  const auto n = static_cast<std::size_t>(data.X.rows());
  Identification out;
  if (opt.d_max == 1) {
    const Mat xi = dmd(data.X, data.Y);
    const ObservableLibrary lib = monomials(n, 1);
    out.sparse = {lib, xi, Mask::Constant(xi.rows(), xi.cols(), true), data.time_kind, 0.0};
    out.refined.model = {lib, xi, data.time_kind, detail::leading_rows(n), {}};
    out.refined.converged = true;
    out.refined.message = "linear fit on the states";
    return out;
  }
  out.sparse = sindy(data, monomials(n, opt.d_max), opt.sindy);
  out.refined = refine_subspace(out.sparse, data, opt.refine);
  return out;
}

/// Relative invariance defect of a model along a trajectory: RMS of
/// ||d/dt Theta - K Theta|| (continuous, interior samples, central differences)
/// or ||Theta(x_{k+1}) - K Theta(x_k)|| (discrete), over RMS ||Theta||.
[[nodiscard]] inline double invariance_residual(const KoopmanModel& model, const Trajectory& traj) {
  model.validate();
  if (static_cast<std::size_t>(traj.dim()) != model.library.dim()) throw DimensionError("invariance_residual: state dimension mismatch");
  const Mat theta = lift_states(model, traj.states);
  double num = 0.0;
  double den = 0.0;
  if (model.time_kind == TimeKind::Continuous) {
    if (traj.size() < 5) throw InvalidArgument("invariance_residual: need at least 5 samples");
    const double dt = uniform_step(traj);
    const Mat rates = finite_difference(theta, dt);
    for (Eigen::Index k = 2; k < theta.cols() - 2; ++k) {
      num += (rates.col(k) - model.K * theta.col(k)).squaredNorm();
      den += theta.col(k).squaredNorm();
    }
  } else {
    if (traj.size() < 2) throw InvalidArgument("invariance_residual: need at least 2 samples");
    traj.validate();
    for (Eigen::Index k = 0; k + 1 < theta.cols(); ++k) {
      num += (theta.col(k + 1) - model.K * theta.col(k)).squaredNorm();
      den += theta.col(k).squaredNorm();
    }
  }
  if (den == 0.0) return 0.0;
  return std::sqrt(num / den);
}

}  // namespace koopmankit
