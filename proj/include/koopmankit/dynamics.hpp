#pragma once

// Polynomial vector fields and maps, fixed-step integration and iteration,
// and the registry of benchmark systems.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "koopmankit/errors.hpp"
#include "koopmankit/numerics.hpp"
#include "koopmankit/polynomial.hpp"

namespace koopmankit {

enum class TimeKind { Continuous, Discrete };

[[nodiscard]] inline const char* to_string(TimeKind k) noexcept {
  return k == TimeKind::Continuous ? "continuous" : "discrete";
}

[[nodiscard]] inline TimeKind time_kind_from_string(const std::string& s) {
  if (s == "continuous") return TimeKind::Continuous;
  if (s == "discrete") return TimeKind::Discrete;
  throw InvalidArgument("unknown time kind '" + s + "'");
}

/// One term a * x^N of a univariate manifold polynomial P(x).
struct ManifoldTerm {
  double coeff;
  int power;
};
using ManifoldPolynomial = std::vector<ManifoldTerm>;

using Params = std::map<std::string, double>;

struct PolySystem {
  std::string name;
  TimeKind time_kind = TimeKind::Continuous;
  std::vector<Polynomial> field;  // right-hand side (continuous) or map (discrete), one per state
  Mat input_map;                  // n x q; empty when unactuated
  Params params;

  [[nodiscard]] std::size_t dim() const noexcept { return field.size(); }
  [[nodiscard]] bool actuated() const noexcept { return input_map.size() > 0; }

  /// Jacobian of the field at the origin (the linear part).
  [[nodiscard]] Mat linearization() const {
    const auto n = static_cast<Eigen::Index>(dim());
    Mat a = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        a(i, j) = field[static_cast<std::size_t>(i)].coeff(unit_exponents(dim(), static_cast<std::size_t>(j)));
      }
    }
    return a;
  }
};

/// Samples of a state trajectory; states and inputs are stored column-wise.
struct Trajectory {
  Vec times;
  Mat states;  // n x N
  Mat inputs;  // q x N, or empty

  [[nodiscard]] Eigen::Index size() const noexcept { return times.size(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return states.rows(); }
  [[nodiscard]] bool has_inputs() const noexcept { return inputs.size() > 0; }

  void validate() const {
    if (states.cols() != times.size()) throw DimensionError("trajectory: |times| != |states|");
    if (has_inputs() && inputs.cols() != times.size()) throw DimensionError("trajectory: |inputs| != |times|");
    for (Eigen::Index k = 1; k < times.size(); ++k) {
      if (!(times(k) > times(k - 1))) throw InvalidArgument("trajectory: times must increase strictly");
    }
  }
};

/// State feedback u = controller(x).
using Feedback = std::function<Vec(const Vec&)>;

inline constexpr double kBlowUpNorm = 1e8;

/// f(x) + B u with an explicit input map.
[[nodiscard]] inline Vec eval_field(const PolySystem& sys, const Vec& x, const std::optional<Vec>& u,
                                    const std::optional<Mat>& b) {
  if (static_cast<std::size_t>(x.size()) != sys.dim()) throw DimensionError("eval_field: state dimension mismatch");
  if (u.has_value() != b.has_value()) throw InvalidArgument("eval_field: input and input map must be given together");
  require_finite(x, "eval_field");
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = sys.field[static_cast<std::size_t>(i)](x);
  if (u) {
    if (b->rows() != x.size() || b->cols() != u->size()) throw DimensionError("eval_field: input map shape mismatch");
    out.noalias() += (*b) * (*u);
  }
  return out;
}

[[nodiscard]] inline Vec eval_field(const PolySystem& sys, const Vec& x) {
  return eval_field(sys, x, std::nullopt, std::nullopt);
}

/// f(x) + B u using the system's own input map.
[[nodiscard]] inline Vec eval_field(const PolySystem& sys, const Vec& x, const Vec& u) {
  if (!sys.actuated()) throw InvalidArgument("eval_field: system '" + sys.name + "' has no input map");
  return eval_field(sys, x, u, sys.input_map);
}

namespace detail {
inline void guard_escape(const Vec& x, double t) {
  if (!all_finite(x) || x.norm() > kBlowUpNorm) {
    throw BlowUp("state norm exceeded 1e8 at t=" + std::to_string(t), t);
  }
}
}  // namespace detail

/// Classical RK4 with fixed step dt from t=0 to t_end. With a controller, the
/// feedback is evaluated at every RK substep and the input at each sample is
/// recorded in the trajectory.
[[nodiscard]] inline Trajectory integrate(const PolySystem& sys, const Vec& x0, double t_end, double dt,
                                          const Feedback& controller = {}) {
  if (sys.time_kind != TimeKind::Continuous) throw InvalidArgument("integrate: system is discrete; use iterate");
  if (!(dt > 0.0)) throw InvalidArgument("integrate: dt must be positive");
  if (!(t_end >= 0.0)) throw InvalidArgument("integrate: t_end must be non-negative");
  if (static_cast<std::size_t>(x0.size()) != sys.dim()) throw DimensionError("integrate: x0 dimension mismatch");
  require_finite(x0, "integrate(x0)");
  if (controller && !sys.actuated()) throw InvalidArgument("integrate: controller given for an unactuated system");

  const auto steps = static_cast<Eigen::Index>(std::llround(t_end / dt));
  const Eigen::Index n = x0.size();
  Trajectory traj;
  traj.times.resize(steps + 1);
  for (Eigen::Index k = 0; k <= steps; ++k) traj.times(k) = static_cast<double>(k) * dt;
  traj.states.resize(n, steps + 1);
  if (controller) traj.inputs.resize(sys.input_map.cols(), steps + 1);

  auto rhs = [&](const Vec& x) -> Vec {
    if (!controller) return eval_field(sys, x);
    return eval_field(sys, x, controller(x));
  };

  Vec x = x0;
  traj.states.col(0) = x;
  if (controller) traj.inputs.col(0) = controller(x);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vec k1 = rhs(x);
    const Vec k2 = rhs(x + 0.5 * dt * k1);
    const Vec k3 = rhs(x + 0.5 * dt * k2);
    const Vec k4 = rhs(x + dt * k3);
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::guard_escape(x, traj.times(k + 1));
    traj.states.col(k + 1) = x;
    if (controller) traj.inputs.col(k + 1) = controller(x);
  }
  return traj;
}

/// Exact iteration x_{k+1} = F(x_k); times are the step indices.
[[nodiscard]] inline Trajectory iterate(const PolySystem& sys, const Vec& x0, Eigen::Index steps) {
  if (sys.time_kind != TimeKind::Discrete) throw InvalidArgument("iterate: system is continuous; use integrate");
  if (steps < 0) throw InvalidArgument("iterate: negative step count");
  if (static_cast<std::size_t>(x0.size()) != sys.dim()) throw DimensionError("iterate: x0 dimension mismatch");
  require_finite(x0, "iterate(x0)");
  Trajectory traj;
  traj.times = Vec::LinSpaced(steps + 1, 0.0, static_cast<double>(steps));
  traj.states.resize(x0.size(), steps + 1);
  Vec x = x0;
  traj.states.col(0) = x;
  for (Eigen::Index k = 0; k < steps; ++k) {
    x = eval_field(sys, x);
    detail::guard_escape(x, static_cast<double>(k + 1));
    traj.states.col(k + 1) = x;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// System constructors
// ---------------------------------------------------------------------------

/// x' = A x (continuous) or x_{k+1} = A x_k (discrete).
[[nodiscard]] inline PolySystem linear_system(const Mat& a, TimeKind kind, std::string name = "linear") {
  require_square(a, "linear_system");
  require_finite(a, "linear_system");
  const auto n = static_cast<std::size_t>(a.rows());
  PolySystem sys;
  sys.name = std::move(name);
  sys.time_kind = kind;
  for (std::size_t i = 0; i < n; ++i) {
    Polynomial p(n);
    for (std::size_t j = 0; j < n; ++j) p.add_term(unit_exponents(n, j), a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    sys.field.push_back(std::move(p));
  }
  return sys;
}

[[nodiscard]] inline Polynomial manifold_polynomial(const ManifoldPolynomial& poly, std::size_t dim) {
  Polynomial p(dim);
  for (const auto& t : poly) {
    if (t.power < 1) throw InvalidArgument("manifold polynomial: powers must be positive");
    Exponents e(dim, 0);
    e[0] = t.power;
    p.add_term(e, t.coeff);
  }
  return p;
}

/// Continuous slow-manifold family x1' = mu x1, x2' = lambda (x2 - P(x1)).
[[nodiscard]] inline PolySystem slow_manifold_system(double mu, double lambda, const ManifoldPolynomial& poly) {
  PolySystem sys;
  sys.time_kind = TimeKind::Continuous;
  Polynomial f1(2);
  f1.add_term({1, 0}, mu);
  Polynomial f2(2);
  f2.add_term({0, 1}, lambda);
  for (const auto& t : poly) {
    if (t.power < 1) throw InvalidArgument("slow manifold: powers must be positive");
    f2.add_term({t.power, 0}, -t.coeff * lambda);
  }
  sys.field = {f1, f2};
  sys.params = {{"mu", mu}, {"lambda", lambda}};
  return sys;
}

/// Discrete slow-manifold family x1 -> mu x1, x2 -> lambda x2 + (1 - lambda) P(x1).
[[nodiscard]] inline PolySystem slow_manifold_map(double mu, double lambda, const ManifoldPolynomial& poly) {
  PolySystem sys;
  sys.time_kind = TimeKind::Discrete;
  Polynomial f1(2);
  f1.add_term({1, 0}, mu);
  Polynomial f2(2);
  f2.add_term({0, 1}, lambda);
  for (const auto& t : poly) {
    if (t.power < 1) throw InvalidArgument("slow manifold: powers must be positive");
    f2.add_term({t.power, 0}, t.coeff * (1.0 - lambda));
  }
  sys.field = {f1, f2};
  sys.params = {{"mu", mu}, {"lambda", lambda}};
  return sys;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

struct SystemInfo {
  std::string name;
  std::string provenance;
  Params defaults;
  std::function<PolySystem(const Params&)> make;
};

namespace detail {

inline PolySystem make_tu_map(const Params& p) {
  const double lambda = p.at("lambda");
  const double mu = p.at("mu");
  PolySystem sys;
  sys.time_kind = TimeKind::Discrete;
  Polynomial f1(2);
  f1.add_term({1, 0}, lambda);
  Polynomial f2(2);
  f2.add_term({0, 1}, mu);
  f2.add_term({2, 0}, lambda * lambda - mu);
  sys.field = {f1, f2};
  return sys;
}

inline PolySystem make_logistic(const Params& p) {
  const double r = p.at("r");
  PolySystem sys;
  sys.time_kind = TimeKind::Discrete;
  Polynomial f(1);
  f.add_term({1}, r);
  f.add_term({2}, -r);
  sys.field = {f};
  return sys;
}

inline PolySystem make_center(const Params&) {
  PolySystem sys;
  sys.time_kind = TimeKind::Continuous;
  sys.field = {Polynomial::monomial({2})};
  return sys;
}

inline PolySystem make_actuated(const Params& p, double b1, double b2) {
  PolySystem sys = slow_manifold_system(p.at("mu"), p.at("lambda"), {{1.0, 2}});
  sys.input_map = Mat(2, 1);
  sys.input_map << b1, b2;
  return sys;
}

// Quadratic-manifold system in the sum/difference coordinates eta = x1 + x2, xi = x1 - x2.
inline PolySystem make_rotated(const Params& p) {
  const double mu = p.at("mu");
  const double lambda = p.at("lambda");
  const Polynomial eta = Polynomial::variable(2, 0);
  const Polynomial xi = Polynomial::variable(2, 1);
  const Polynomial sum = eta + xi;
  const Polynomial diff = eta - xi;
  const Polynomial sq = sum * sum;
  PolySystem sys;
  sys.time_kind = TimeKind::Continuous;
  sys.field = {(mu / 2.0) * sum + (lambda / 2.0) * diff - (lambda / 4.0) * sq,
               (mu / 2.0) * sum - (lambda / 2.0) * diff + (lambda / 4.0) * sq};
  return sys;
}

inline const std::vector<SystemInfo>& registry_storage() {
  static const std::vector<SystemInfo> systems = {
      {"quad-manifold", "x1' = mu x1, x2' = lambda (x2 - x1^2): quadratic attracting slow manifold",
       {{"mu", -0.05}, {"lambda", -1.0}},
       [](const Params& p) { return slow_manifold_system(p.at("mu"), p.at("lambda"), {{1.0, 2}}); }},
      {"quartic-manifold", "x1' = mu x1, x2' = lambda (x2 - x1^4 + 2 x1^2): quartic attracting slow manifold",
       {{"mu", -0.05}, {"lambda", -1.0}},
       [](const Params& p) { return slow_manifold_system(p.at("mu"), p.at("lambda"), {{-2.0, 2}, {1.0, 4}}); }},
      {"slow-manifold-dt", "x1 -> mu x1, x2 -> lambda x2 + (1 - lambda) x1^2: discrete slow manifold",
       {{"mu", 0.9}, {"lambda", 0.1}},
       [](const Params& p) { return slow_manifold_map(p.at("mu"), p.at("lambda"), {{1.0, 2}}); }},
      {"tu-map", "x1 -> lambda x1, x2 -> mu x2 + (lambda^2 - mu) x1^2: discrete map with exact 3-d lift",
       {{"lambda", 0.9}, {"mu", 0.5}}, make_tu_map},
      {"logistic", "x -> r x (1 - x): logistic map, no finite state-inclusive lift", {{"r", 3.5}}, make_logistic},
      {"center-manifold", "x' = x^2: isolated fixed point with finite-time escape", {}, make_center},
      {"kooc-demo", "quadratic-manifold system with lambda = 1 and input on x2 (KOOC vs LQR benchmark)",
       {{"mu", -0.1}, {"lambda", 1.0}}, [](const Params& p) { return make_actuated(p, 0.0, 1.0); }},
      {"limitation", "unstable x1 with input on x1: lifted x1^2 mode 2 mu is uncontrollable",
       {{"mu", 0.1}, {"lambda", -1.0}}, [](const Params& p) { return make_actuated(p, 1.0, 0.0); }},
      {"rotated-quad", "quadratic-manifold system in coordinates eta = x1 + x2, xi = x1 - x2",
       {{"mu", -0.05}, {"lambda", -1.0}}, make_rotated},
  };
  return systems;
}

inline std::string canonical_name(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

}  // namespace detail

[[nodiscard]] inline const std::vector<SystemInfo>& registry() { return detail::registry_storage(); }

[[nodiscard]] inline const SystemInfo& system_info(const std::string& name) {
  const std::string key = detail::canonical_name(name);
  for (const auto& info : registry()) {
    if (info.name == key) return info;
  }
  throw InvalidArgument("unknown system '" + name + "'");
}

/// Registry lookup; `params` overrides the defaults and may not introduce new names.
[[nodiscard]] inline PolySystem builtin(const std::string& name, const Params& params = {}) {
  const SystemInfo& info = system_info(name);
  Params merged = info.defaults;
  for (const auto& [key, value] : params) {
    if (!merged.contains(key)) throw InvalidArgument("system '" + info.name + "' has no parameter '" + key + "'");
    if (!std::isfinite(value)) throw NonFiniteError("parameter '" + key + "' is not finite");
    merged[key] = value;
  }
  PolySystem sys = info.make(merged);
  sys.name = info.name;
  sys.params = merged;
  return sys;
}

}  // namespace koopmankit
