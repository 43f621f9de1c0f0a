#pragma once

// Continuous-time LQR: Riccati solver, gain synthesis, Koopman operator
// optimal control (LQR on a lifted model with the state cost embedded), and
// closed-loop cost accounting.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/errors.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/numerics.hpp"

namespace koopmankit {

struct LqrProblem {
  Mat A;  // n x n
  Mat B;  // n x q
  Mat Q;  // n x n, symmetric PSD
  Mat R;  // q x q, symmetric PD

  void validate() const {
    const Eigen::Index n = A.rows();
    require_square(A, "lqr(A)");
    if (B.rows() != n) throw DimensionError("lqr: B must have as many rows as A");
    if (Q.rows() != n || Q.cols() != n) throw DimensionError("lqr: Q must be n x n");
    const Eigen::Index q = B.cols();
    if (R.rows() != q || R.cols() != q) throw DimensionError("lqr: R must be q x q");
    require_finite(A, "lqr(A)");
    require_finite(B, "lqr(B)");
    require_finite(Q, "lqr(Q)");
    require_finite(R, "lqr(R)");
    if ((Q - Q.transpose()).norm() > 1e-12 * std::max(1.0, Q.norm())) throw InvalidArgument("lqr: Q is not symmetric");
    if ((R - R.transpose()).norm() > 1e-12 * std::max(1.0, R.norm())) throw InvalidArgument("lqr: R is not symmetric");
    if (n > 0) {
      const Vec qe = Eigen::SelfAdjointEigenSolver<Mat>(Q).eigenvalues();
      if (qe.minCoeff() < -1e-12 * std::max(1.0, Q.norm())) throw InvalidArgument("lqr: Q is not positive semidefinite");
    }
    if (q > 0) {
      const Vec re = Eigen::SelfAdjointEigenSolver<Mat>(R).eigenvalues();
      if (!(re.minCoeff() > 0.0)) throw InvalidArgument("lqr: R is not positive definite");
    }
  }
};

/// Frobenius norm of A^T P + P A - P B R^-1 B^T P + Q.
[[nodiscard]] inline double care_residual(const LqrProblem& p, const Mat& x) {
  const Mat rinv_bt = p.R.llt().solve(p.B.transpose());
  return (p.A.transpose() * x + x * p.A - x * p.B * rinv_bt * x + p.Q).norm();
}

[[nodiscard]] inline double care_tolerance(const LqrProblem& p) { return 1e-8 * std::max(1.0, p.Q.norm()); }

/// Eigenvalues of A with Re >= -1e-9 for which [A - lambda I, B] loses rank
/// (SVD rank with relative cutoff 1e-10): the unstabilizable modes.
[[nodiscard]] inline std::vector<Complex> pbh_uncontrollable_modes(const Mat& a, const Mat& b) {
  require_square(a, "pbh(A)");
  if (b.rows() != a.rows()) throw DimensionError("pbh: B must have as many rows as A");
  const Eigen::Index n = a.rows();
  std::vector<Complex> modes;
  if (n == 0) return modes;
  const EigenPairSet pairs = eig(a);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex lam = pairs.values(i);
    if (lam.real() < -1e-9) continue;
    CMat test(n, n + b.cols());
    test.leftCols(n) = a.cast<Complex>() - lam * CMat::Identity(n, n);
    test.rightCols(b.cols()) = b.cast<Complex>();
    Eigen::JacobiSVD<CMat> svd(test);
    const Eigen::VectorXd s = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      if (s(k) > 1e-10 * s(0)) ++rank;
    }
    if (rank < n) modes.push_back(lam);
  }
  return modes;
}

namespace detail {

inline std::string describe_modes(const std::vector<Complex>& modes) {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (i) os << ", ";
    os << modes[i].real();
    if (modes[i].imag() != 0.0) os << (modes[i].imag() > 0 ? "+" : "") << modes[i].imag() << "i";
  }
  return os.str();
}

// Solve Ac^T X + X Ac + W = 0 by vectorization (small n only).
inline Mat solve_lyapunov(const Mat& ac, const Mat& w) {
  const Eigen::Index n = ac.rows();
  const Mat eye = Mat::Identity(n, n);
  Mat big = Mat::Zero(n * n, n * n);
  // vec(Ac^T X) = (I kron Ac^T) vec(X); vec(X Ac) = (Ac^T kron I) vec(X)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      big.block(i * n, j * n, n, n) += eye(i, j) * ac.transpose();
      big.block(i * n, j * n, n, n) += ac(j, i) * eye;
    }
  }
  const Vec rhs = -Eigen::Map<const Vec>(w.data(), n * n);
  const Vec sol = big.fullPivLu().solve(rhs);
  Mat x = Eigen::Map<const Mat>(sol.data(), n, n);
  return 0.5 * (x + x.transpose());
}

inline bool hurwitz(const Mat& a) {
  if (a.rows() == 0) return true;
  const Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().real().maxCoeff() < 0.0;
}

}  // namespace detail

/// Stabilizing solution of A^T P + P A - P B R^-1 B^T P + Q = 0 via the stable
/// invariant subspace of the Hamiltonian matrix, polished by Newton-Kleinman.
[[nodiscard]] inline Mat solve_care(const LqrProblem& p) {
  p.validate();
  const Eigen::Index n = p.A.rows();
  if (n == 0) return Mat(0, 0);

  const auto modes = pbh_uncontrollable_modes(p.A, p.B);
  if (!modes.empty()) {
    throw NotStabilizable("(A, B) is not stabilizable: uncontrollable mode(s) " + detail::describe_modes(modes), modes);
  }

  const Mat s = p.B * p.R.llt().solve(p.B.transpose());
  Mat h(2 * n, 2 * n);
  h << p.A, -s, -p.Q, -p.A.transpose();
  const Eigen::EigenSolver<Mat> es(h, true);
  if (es.info() != Eigen::Success) throw ConvergenceError("solve_care: Hamiltonian eigensolver did not converge");

  const CVec values = es.eigenvalues();
  const CMat vectors = es.eigenvectors();
  std::vector<Eigen::Index> stable;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i).real() < 0.0) stable.push_back(i);
  }
  if (static_cast<Eigen::Index>(stable.size()) != n) {
    throw NotStabilizable("solve_care: Hamiltonian has eigenvalues on the imaginary axis (undetectable mode)", {});
  }
  CMat x1(n, n);
  CMat x2(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x1.col(j) = vectors.col(stable[static_cast<std::size_t>(j)]).head(n);
    x2.col(j) = vectors.col(stable[static_cast<std::size_t>(j)]).tail(n);
  }
  const Eigen::FullPivLU<CMat> lu(x1);
  if (!lu.isInvertible()) throw NotStabilizable("solve_care: stable subspace basis X1 is singular", {});
  Mat x = (x2 * lu.inverse()).real();
  x = 0.5 * (x + x.transpose());

  const double tol = care_tolerance(p);
  double res = care_residual(p, x);
  for (int it = 0; it < 30 && res > 1e-3 * tol; ++it) {
    const Mat gain = p.R.llt().solve(p.B.transpose() * x);
    const Mat ac = p.A - p.B * gain;
    if (!detail::hurwitz(ac)) break;
    const Mat next = detail::solve_lyapunov(ac, p.Q + gain.transpose() * p.R * gain);
    const double next_res = care_residual(p, next);
    if (!(next_res < res)) break;
    x = next;
    res = next_res;
  }
  if (!(res <= tol)) {
    throw ConvergenceError("solve_care: residual " + std::to_string(res) + " above tolerance " + std::to_string(tol));
  }
  const Mat gain = p.R.llt().solve(p.B.transpose() * x);
  if (!detail::hurwitz(p.A - p.B * gain)) throw NotStabilizable("solve_care: closed loop is not Hurwitz", {});
  return x;
}

/// C = R^-1 B^T P for the stabilizing CARE solution P.
[[nodiscard]] inline Mat lqr_gain(const LqrProblem& p, const Mat& care_solution) {
  return p.R.llt().solve(p.B.transpose() * care_solution);
}

[[nodiscard]] inline Mat lqr_gain(const LqrProblem& p) { return lqr_gain(p, solve_care(p)); }

/// LQR on a lifted model, u = -gain * y(x).
struct KoocController {
  KoopmanModel model;
  Mat gain;           // q x m
  Mat care_solution;  // m x m
  LqrProblem problem;

  [[nodiscard]] Vec input(const Vec& x) const { return -gain * lift_state(model, x); }

  [[nodiscard]] Feedback feedback() const {
    return [self = *this](const Vec& x) { return self.input(x); };
  }
};

/// Input map on the lifted coordinates. Rows of observables that depend on an
/// actuated state would need a state-dependent input term; those are set to
/// zero and reported in `dropped`.
struct LiftedInput {
  Mat B;
  std::vector<std::string> dropped;
};

[[nodiscard]] inline LiftedInput lift_input_map(const KoopmanModel& model, const Mat& b_state) {
  model.validate();
  if (model.has_coordinates()) throw InvalidArgument("lift_input_map: transformed coordinates are not supported");
  const auto n = static_cast<Eigen::Index>(model.library.dim());
  if (b_state.rows() != n) throw DimensionError("lift_input_map: B must have one row per state");
  LiftedInput out{Mat::Zero(model.K.rows(), b_state.cols()), {}};
  for (std::size_t r = 0; r < model.state_rows.size(); ++r) {
    out.B.row(static_cast<Eigen::Index>(model.state_rows[r])) = b_state.row(static_cast<Eigen::Index>(r));
  }
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (std::find(model.state_rows.begin(), model.state_rows.end(), i) != model.state_rows.end()) continue;
    const Observable& o = model.library[i];
    bool touches = false;
    for (Eigen::Index v = 0; v < n; ++v) {
      const bool depends = o.is_monomial() ? o.exponents[static_cast<std::size_t>(v)] > 0 : o.variable == static_cast<std::size_t>(v);
      if (depends && b_state.row(v).cwiseAbs().maxCoeff() > 0.0) touches = true;
    }
    if (touches) out.dropped.push_back("d/dt " + o.label() + " has a state-dependent input term");
  }
  return out;
}

/// LQR on (K, B_lift, Q~, R) where Q~ embeds Q_state on the state rows and is
/// zero elsewhere.
[[nodiscard]] inline KoocController kooc_synthesize(const KoopmanModel& model, const Mat& b_lift, const Mat& q_state,
                                                    const Mat& r) {
  model.validate();
  if (model.time_kind != TimeKind::Continuous) throw InvalidArgument("kooc_synthesize: model must be continuous");
  if (model.state_rows.empty()) throw InvalidArgument("kooc_synthesize: model must be state-inclusive");
  const auto ns = static_cast<Eigen::Index>(model.state_rows.size());
  if (q_state.rows() != ns || q_state.cols() != ns) throw DimensionError("kooc_synthesize: Q must match the state rows");
  if (b_lift.rows() != model.K.rows()) throw DimensionError("kooc_synthesize: B_lift row count mismatch");

  Mat q_tilde = Mat::Zero(model.K.rows(), model.K.cols());
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (Eigen::Index j = 0; j < ns; ++j) {
      q_tilde(static_cast<Eigen::Index>(model.state_rows[static_cast<std::size_t>(i)]),
              static_cast<Eigen::Index>(model.state_rows[static_cast<std::size_t>(j)])) = q_state(i, j);
    }
  }
  LqrProblem prob{model.K, b_lift, q_tilde, r};
  const Mat p = solve_care(prob);
  return {model, lqr_gain(prob, p), p, prob};
}

/// Cumulative trapezoidal integral of x^T Q x + u^T R u at every sample.
[[nodiscard]] inline Vec closed_loop_cost(const Trajectory& traj, const Mat& q, const Mat& r) {
  traj.validate();
  if (!traj.has_inputs()) throw InvalidArgument("closed_loop_cost: trajectory carries no inputs");
  if (q.rows() != traj.dim() || q.cols() != traj.dim()) throw DimensionError("closed_loop_cost: Q shape mismatch");
  if (r.rows() != traj.inputs.rows() || r.cols() != traj.inputs.rows()) throw DimensionError("closed_loop_cost: R shape mismatch");
  const Eigen::Index n = traj.size();
  Vec j = Vec::Zero(n);
  auto integrand = [&](Eigen::Index k) {
    return traj.states.col(k).dot(q * traj.states.col(k)) + traj.inputs.col(k).dot(r * traj.inputs.col(k));
  };
  double prev = n > 0 ? integrand(0) : 0.0;
  for (Eigen::Index k = 1; k < n; ++k) {
    const double cur = integrand(k);
    j(k) = j(k - 1) + 0.5 * (prev + cur) * (traj.times(k) - traj.times(k - 1));
    prev = cur;
  }
  return j;
}

/// Running sum of x^T Q x + (C x)^T R (C x) over samples, with C the linear LQR
/// gain regardless of the controller that produced the trajectory. This is
/// the cost formula of the reference benchmark script (no dt weighting).
[[nodiscard]] inline Vec script_cost_series(const Trajectory& traj, const Mat& q, const Mat& r, const Mat& c_lqr) {
  const Eigen::Index n = traj.size();
  Vec j(n);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec x = traj.states.col(k);
    const Vec u = c_lqr * x;
    acc += x.dot(q * x) + u.dot(r * u);
    j(k) = acc;
  }
  return j;
}

struct ComparisonOptions {
  double horizon = 50.0;
  double dt = 0.01;
  Mat Q;  // default identity
  Mat R;  // default identity
};

struct ComparisonReport {
  Mat lqr_gain;
  KoocController kooc;
  std::vector<std::string> dropped_input_terms;
  Trajectory lqr_trajectory;
  Trajectory kooc_trajectory;
  Vec j_lqr;
  Vec j_kooc;
  Vec j_lqr_script;
  Vec j_kooc_script;
  double cost_ratio = 1.0;    // applied-input convention
  double script_ratio = 1.0;  // benchmark-script convention
};

namespace detail {
inline double safe_ratio(double num, double den) {
  if (den == 0.0 && num == 0.0) return 1.0;
  return num / den;
}
}  // namespace detail

/// LQR on the Jacobian linearization versus KOOC on the closed lift, both
/// simulated on the full nonlinear system with continuous feedback.
[[nodiscard]] inline ComparisonReport compare_lqr_kooc(const PolySystem& sys, const Vec& x0,
                                                       const ComparisonOptions& opt = {}) {
  if (!sys.actuated()) throw InvalidArgument("compare_lqr_kooc: system has no input map");
  if (sys.time_kind != TimeKind::Continuous) throw InvalidArgument("compare_lqr_kooc: system must be continuous");
  const auto n = static_cast<Eigen::Index>(sys.dim());
  const Eigen::Index q = sys.input_map.cols();
  const Mat qm = opt.Q.size() ? opt.Q : Mat(Mat::Identity(n, n));
  const Mat rm = opt.R.size() ? opt.R : Mat(Mat::Identity(q, q));

  ComparisonReport rep;
  const LqrProblem lin{sys.linearization(), sys.input_map, qm, rm};
  rep.lqr_gain = lqr_gain(lin);

  const auto lift = closed_lift(sys);
  if (!lift) throw InvalidArgument("compare_lqr_kooc: system '" + sys.name + "' has no closed polynomial lift");
  const LiftedInput bl = lift_input_map(*lift, sys.input_map);
  rep.dropped_input_terms = bl.dropped;
  rep.kooc = kooc_synthesize(*lift, bl.B, qm, rm);

  const Mat c = rep.lqr_gain;
  rep.lqr_trajectory = integrate(sys, x0, opt.horizon, opt.dt, [c](const Vec& x) -> Vec { return -c * x; });
  rep.kooc_trajectory = integrate(sys, x0, opt.horizon, opt.dt, rep.kooc.feedback());

  rep.j_lqr = closed_loop_cost(rep.lqr_trajectory, qm, rm);
  rep.j_kooc = closed_loop_cost(rep.kooc_trajectory, qm, rm);
  rep.j_lqr_script = script_cost_series(rep.lqr_trajectory, qm, rm, c);
  rep.j_kooc_script = script_cost_series(rep.kooc_trajectory, qm, rm, c);
  rep.cost_ratio = detail::safe_ratio(rep.j_kooc(rep.j_kooc.size() - 1), rep.j_lqr(rep.j_lqr.size() - 1));
  rep.script_ratio =
      detail::safe_ratio(rep.j_kooc_script(rep.j_kooc_script.size() - 1), rep.j_lqr_script(rep.j_lqr_script.size() - 1));
  return rep;
}

}  // namespace koopmankit
