#pragma once

// Observable libraries, finite Koopman models and the closed-form lifts:
// slow-manifold families (continuous and discrete), the Tu map rewrite,
// and truncated Carleman operators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "koopmankit/dynamics.hpp"
#include "koopmankit/errors.hpp"
#include "koopmankit/numerics.hpp"
#include "koopmankit/polynomial.hpp"

namespace koopmankit {

/// A scalar observable: a monomial, or the closed-form exp(-1/x_i).
struct Observable {
  enum class Kind { Monomial, ExpNegInv };

  Kind kind = Kind::Monomial;
  Exponents exponents;       // Monomial
  std::size_t variable = 0;  // ExpNegInv: index of the state coordinate

  [[nodiscard]] static Observable monomial(Exponents e) { return {Kind::Monomial, std::move(e), 0}; }
  [[nodiscard]] static Observable exp_neg_inv(std::size_t variable) { return {Kind::ExpNegInv, {}, variable}; }

  [[nodiscard]] bool is_monomial() const noexcept { return kind == Kind::Monomial; }

  [[nodiscard]] std::string label() const {
    if (is_monomial()) return monomial_label(exponents);
    return "exp(-1/x" + std::to_string(variable + 1) + ")";
  }

  /// exp(-1/x) is continued by 0 at x = 0 and undefined for x < 0.
  [[nodiscard]] double operator()(const Eigen::Ref<const Vec>& x) const {
    if (is_monomial()) return eval_monomial(exponents, x);
    const double v = x(static_cast<Eigen::Index>(variable));
    if (v < 0.0) throw InvalidArgument("exp(-1/x) is undefined for x < 0");
    if (v == 0.0) return 0.0;
    return std::exp(-1.0 / v);
  }

  friend bool operator==(const Observable&, const Observable&) = default;
};

/// Graded order on monomials: total degree ascending, then lexicographically
/// descending exponents (x1^2 before x1*x2 before x2^2).
[[nodiscard]] inline bool graded_lex_less(const Exponents& a, const Exponents& b) {
  const int da = total_degree(a);
  const int db = total_degree(b);
  if (da != db) return da < db;
  return a > b;
}

class ObservableLibrary {
 public:
  ObservableLibrary() = default;

  ObservableLibrary(std::size_t dim, std::vector<Observable> observables)
      : dim_(dim), observables_(std::move(observables)) {
    for (std::size_t i = 0; i < observables_.size(); ++i) {
      const auto& o = observables_[i];
      if (o.is_monomial() && o.exponents.size() != dim_) {
        throw DimensionError("library: observable '" + o.label() + "' has wrong exponent length");
      }
      if (!o.is_monomial() && o.variable >= dim_) throw DimensionError("library: named observable variable out of range");
      for (std::size_t j = 0; j < i; ++j) {
        if (observables_[j] == o) throw InvalidArgument("library: duplicate observable '" + o.label() + "'");
      }
    }
  }

  [[nodiscard]] static ObservableLibrary from_exponents(std::size_t dim, const std::vector<Exponents>& exps) {
    std::vector<Observable> obs;
    obs.reserve(exps.size());
    for (const auto& e : exps) obs.push_back(Observable::monomial(e));
    return {dim, std::move(obs)};
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t size() const noexcept { return observables_.size(); }
  [[nodiscard]] const std::vector<Observable>& observables() const noexcept { return observables_; }
  [[nodiscard]] const Observable& operator[](std::size_t i) const { return observables_.at(i); }

  /// True when the first dim() observables are x1, ..., xn in order.
  [[nodiscard]] bool state_inclusive() const {
    if (observables_.size() < dim_) return false;
    for (std::size_t i = 0; i < dim_; ++i) {
      if (!(observables_[i] == Observable::monomial(unit_exponents(dim_, i)))) return false;
    }
    return true;
  }

  [[nodiscard]] bool all_monomial() const {
    return std::all_of(observables_.begin(), observables_.end(), [](const Observable& o) { return o.is_monomial(); });
  }

  [[nodiscard]] std::optional<std::size_t> find(const Observable& o) const {
    for (std::size_t i = 0; i < observables_.size(); ++i) {
      if (observables_[i] == o) return i;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::optional<std::size_t> find_label(const std::string& label) const {
    for (std::size_t i = 0; i < observables_.size(); ++i) {
      if (observables_[i].label() == label) return i;
    }
    return std::nullopt;
  }

  [[nodiscard]] std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& o : observables_) out.push_back(o.label());
    return out;
  }

  /// Theta(x).
  [[nodiscard]] Vec evaluate(const Eigen::Ref<const Vec>& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_) throw DimensionError("library: state dimension mismatch");
    Vec y(static_cast<Eigen::Index>(observables_.size()));
    for (std::size_t i = 0; i < observables_.size(); ++i) y(static_cast<Eigen::Index>(i)) = observables_[i](x);
    return y;
  }

  /// Observable i as a polynomial; only for monomial observables.
  [[nodiscard]] Polynomial polynomial(std::size_t i) const {
    const auto& o = observables_.at(i);
    if (!o.is_monomial()) throw InvalidArgument("library: '" + o.label() + "' is not polynomial");
    return Polynomial::monomial(o.exponents);
  }

  friend bool operator==(const ObservableLibrary&, const ObservableLibrary&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<Observable> observables_;
};

/// All monomials of total degree 1..d_max in graded order; states come first.
[[nodiscard]] inline ObservableLibrary monomials(std::size_t n, int d_max) {
  if (n < 1) throw InvalidArgument("monomials: n must be at least 1");
  if (d_max < 1) throw InvalidArgument("monomials: d_max must be at least 1");
  std::vector<Exponents> out;
  for (int d = 1; d <= d_max; ++d) {
    std::vector<Exponents> level;
    Exponents e(n, 0);
    // Enumerate compositions of d into n parts in lexicographically descending order.
    auto rec = [&](auto&& self, std::size_t pos, int remaining) -> void {
      if (pos + 1 == n) {
        e[pos] = remaining;
        level.push_back(e);
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[pos] = k;
        self(self, pos + 1, remaining - k);
      }
    };
    rec(rec, 0, d);
    out.insert(out.end(), level.begin(), level.end());
  }
  return ObservableLibrary::from_exponents(n, out);
}

/// Theta(X): column j holds the library evaluated at state column j.
[[nodiscard]] inline Mat eval_library(const ObservableLibrary& lib, const Mat& states) {
  if (static_cast<std::size_t>(states.rows()) != lib.dim()) throw DimensionError("eval_library: state dimension mismatch");
  require_finite(states, "eval_library");
  Mat out(static_cast<Eigen::Index>(lib.size()), states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) out.col(j) = lib.evaluate(states.col(j));
  return out;
}

/// Finite Koopman representation: y' = K y (continuous generator) or
/// y_{k+1} = K y_k (discrete). Coordinates are y = C * Theta(x), where C is
/// the optional `coordinates` matrix (identity when empty).
struct KoopmanModel {
  ObservableLibrary library;
  Mat K;
  TimeKind time_kind = TimeKind::Continuous;
  std::vector<std::size_t> state_rows;
  Mat coordinates;

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(K.rows()); }
  [[nodiscard]] bool has_coordinates() const noexcept { return coordinates.size() > 0; }

  [[nodiscard]] std::vector<std::string> coordinate_labels() const {
    if (!has_coordinates()) return library.labels();
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < coordinates.rows(); ++i) out.push_back("y" + std::to_string(i + 1));
    return out;
  }

  void validate() const {
    require_square(K, "KoopmanModel");
    require_finite(K, "KoopmanModel");
    const auto width = static_cast<Eigen::Index>(library.size());
    if (has_coordinates()) {
      if (coordinates.rows() != K.rows() || coordinates.cols() != width) {
        throw DimensionError("KoopmanModel: coordinate map shape mismatch");
      }
    } else if (K.rows() != width) {
      throw DimensionError("KoopmanModel: K size differs from library size");
    }
    for (auto r : state_rows) {
      if (r >= size()) throw DimensionError("KoopmanModel: state row out of range");
    }
  }
};

/// y = C * Theta(x).
[[nodiscard]] inline Vec lift_state(const KoopmanModel& model, const Eigen::Ref<const Vec>& x) {
  const Vec theta = model.library.evaluate(x);
  if (model.has_coordinates()) return model.coordinates * theta;
  return theta;
}

[[nodiscard]] inline Mat lift_states(const KoopmanModel& model, const Mat& states) {
  Mat theta = eval_library(model.library, states);
  if (model.has_coordinates()) return model.coordinates * theta;
  return theta;
}

/// Samples of the linear model from y0: exp(K dt)^k y0 (continuous) or K^k y0 (discrete).
[[nodiscard]] inline Mat propagate(const KoopmanModel& model, const Vec& y0, Eigen::Index steps, double dt = 1.0) {
  model.validate();
  if (y0.size() != model.K.rows()) throw DimensionError("propagate: y0 dimension mismatch");
  const Mat step = model.time_kind == TimeKind::Continuous ? expm(model.K, dt) : model.K;
  Mat out(y0.size(), steps + 1);
  out.col(0) = y0;
  for (Eigen::Index k = 0; k < steps; ++k) out.col(k + 1) = step * out.col(k);
  return out;
}

namespace detail {

inline std::vector<std::size_t> leading_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

inline std::vector<ManifoldTerm> sorted_terms(const ManifoldPolynomial& poly) {
  std::vector<ManifoldTerm> terms = poly;
  std::sort(terms.begin(), terms.end(), [](const ManifoldTerm& a, const ManifoldTerm& b) { return a.power < b.power; });
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].power < 1) throw InvalidArgument("slow manifold lift: powers must be positive");
    if (i > 0 && terms[i].power == terms[i - 1].power) {
      throw InvalidArgument("slow manifold lift: duplicate exponent " + std::to_string(terms[i].power));
    }
    if (!std::isfinite(terms[i].coeff)) throw NonFiniteError("slow manifold lift: non-finite coefficient");
  }
  return terms;
}

// Shared layout of the slow-manifold lifts. A term of power 1 folds into the x1 column.
template <typename Diag, typename Coupling>
KoopmanModel slow_manifold_lift(double mu, double lambda, const ManifoldPolynomial& poly, TimeKind kind, Diag diag,
                                Coupling coupling) {
  const auto terms = sorted_terms(poly);
  std::vector<Exponents> exps = {{1, 0}, {0, 1}};
  for (const auto& t : terms) {
    if (t.power > 1) exps.push_back({t.power, 0});
  }
  const auto m = static_cast<Eigen::Index>(exps.size());
  Mat k = Mat::Zero(m, m);
  k(0, 0) = mu;
  k(1, 1) = lambda;
  Eigen::Index col = 2;
  for (const auto& t : terms) {
    if (t.power == 1) {
      k(1, 0) += coupling(t.coeff);
      continue;
    }
    k(col, col) = diag(t.power);
    k(1, col) = coupling(t.coeff);
    ++col;
  }
  KoopmanModel model{ObservableLibrary::from_exponents(2, exps), k, kind, {0, 1}, {}};
  model.validate();
  return model;
}

}  // namespace detail

/// Exact generator for x1' = mu x1, x2' = lambda (x2 - P(x1)) on [x1, x2, x1^N1, ...].
[[nodiscard]] inline KoopmanModel slow_manifold_lift_ct(double mu, double lambda, const ManifoldPolynomial& poly) {
  return detail::slow_manifold_lift(
      mu, lambda, poly, TimeKind::Continuous, [mu](int n) { return static_cast<double>(n) * mu; },
      [lambda](double a) { return -a * lambda; });
}

/// Exact one-step operator for x1 -> mu x1, x2 -> lambda x2 + (1 - lambda) P(x1).
[[nodiscard]] inline KoopmanModel slow_manifold_lift_dt(double mu, double lambda, const ManifoldPolynomial& poly) {
  return detail::slow_manifold_lift(
      mu, lambda, poly, TimeKind::Discrete, [mu](int n) { return ipow(mu, n); },
      [lambda](double a) { return a * (1.0 - lambda); });
}

/// Lift of x1 -> lambda x1, x2 -> mu x2 + (lambda^2 - mu) x1^2 on [x1, x2, x1^2].
[[nodiscard]] inline KoopmanModel tu_lift(double lambda, double mu) {
  Mat k(3, 3);
  k << lambda, 0.0, 0.0, 0.0, mu, lambda * lambda - mu, 0.0, 0.0, lambda * lambda;
  return {ObservableLibrary::from_exponents(2, {{1, 0}, {0, 1}, {2, 0}}), k, TimeKind::Discrete, {0, 1}, {}};
}

[[nodiscard]] inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  long long c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return static_cast<double>(c);
}

/// Full row n (1-based) of the logistic Carleman operator: the coefficients of
/// (r x (1 - x))^n on x^n, ..., x^{2n}.
[[nodiscard]] inline std::vector<double> carleman_logistic_row(double r, int n) {
  if (n < 1) throw InvalidArgument("carleman_logistic_row: n must be at least 1");
  std::vector<double> row(static_cast<std::size_t>(n + 1));
  const double scale = ipow(r, n);
  for (int k = 0; k <= n; ++k) row[static_cast<std::size_t>(k)] = ((k % 2 == 0) ? 1.0 : -1.0) * binomial(n, k) * scale;
  return row;
}

/// Rank-m truncation of the logistic map's Carleman operator on [x, ..., x^m];
/// entries beyond column m are dropped.
[[nodiscard]] inline KoopmanModel carleman_logistic(double r, int rank) {
  if (rank < 1) throw InvalidArgument("carleman_logistic: rank must be at least 1");
  const auto m = static_cast<Eigen::Index>(rank);
  Mat k = Mat::Zero(m, m);
  std::vector<Exponents> exps;
  for (int n = 1; n <= rank; ++n) {
    exps.push_back({n});
    const auto row = carleman_logistic_row(r, n);
    for (int j = 0; j <= n; ++j) {
      const int col = n + j - 1;
      if (col < rank) k(n - 1, col) = row[static_cast<std::size_t>(j)];
    }
  }
  return {ObservableLibrary::from_exponents(1, exps), k, TimeKind::Discrete, {0}, {}};
}

/// Rank-m truncation of the generator of x' = x^2 on [x, ..., x^m].
[[nodiscard]] inline KoopmanModel carleman_center(int rank) {
  if (rank < 1) throw InvalidArgument("carleman_center: rank must be at least 1");
  const auto m = static_cast<Eigen::Index>(rank);
  Mat k = Mat::Zero(m, m);
  std::vector<Exponents> exps;
  for (int i = 1; i <= rank; ++i) {
    exps.push_back({i});
    if (i < rank) k(i - 1, i) = static_cast<double>(i);
  }
  return {ObservableLibrary::from_exponents(1, exps), k, TimeKind::Continuous, {0}, {}};
}

/// Advance of each observable under the dynamics, as a polynomial:
/// the Lie derivative (continuous) or the composition g(F(x)) (discrete).
[[nodiscard]] inline Polynomial advance(const Polynomial& g, const std::vector<Polynomial>& field, TimeKind kind) {
  return kind == TimeKind::Continuous ? g.lie_derivative(field) : g.compose(field);
}

/// Per-row symbolic residual advance(g_k) - sum_j K_kj g_j. All residuals are
/// empty polynomials exactly when the library is invariant with operator K.
[[nodiscard]] inline std::vector<Polynomial> closure_residual(const KoopmanModel& model,
                                                              const std::vector<Polynomial>& field) {
  model.validate();
  if (model.has_coordinates()) throw InvalidArgument("closure_residual: transformed coordinates are not supported");
  if (!model.library.all_monomial()) throw InvalidArgument("closure_residual: library must be polynomial");
  if (field.size() != model.library.dim()) throw DimensionError("closure_residual: field dimension mismatch");
  std::vector<Polynomial> out;
  for (std::size_t k = 0; k < model.size(); ++k) {
    Polynomial rhs(model.library.dim());
    for (std::size_t j = 0; j < model.size(); ++j) {
      rhs.add_term(model.library[j].exponents, model.K(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
    }
    out.push_back(advance(model.library.polynomial(k), field, model.time_kind) - rhs);
  }
  return out;
}

[[nodiscard]] inline std::vector<Polynomial> closure_residual(const KoopmanModel& model, const PolySystem& sys) {
  if (sys.time_kind != model.time_kind) throw InvalidArgument("closure_residual: time kinds differ");
  return closure_residual(model, sys.field);
}

/// Outcome of a symbolic closure completion.
struct ClosureResult {
  std::vector<Exponents> observables;  // states first, then graded order
  bool closed = false;
  int rounds = 0;
};

/// Grow a set of monomial observables until the advance of every member lies
/// in its span, or until max_rounds is exhausted. Each round admits monomials
/// up to twice the current maximum degree.
[[nodiscard]] inline ClosureResult complete_closure(const std::vector<Polynomial>& field, TimeKind kind,
                                                    std::vector<Exponents> seed, int max_rounds) {
  const std::size_t n = field.size();
  std::vector<Exponents> extra;
  for (const auto& e : seed) {
    if (e.size() != n) throw DimensionError("complete_closure: exponent length mismatch");
    bool is_state = total_degree(e) == 1;
    if (!is_state && std::find(extra.begin(), extra.end(), e) == extra.end()) extra.push_back(e);
  }
  auto assemble = [&]() {
    std::vector<Exponents> all;
    for (std::size_t i = 0; i < n; ++i) all.push_back(unit_exponents(n, i));
    std::sort(extra.begin(), extra.end(), graded_lex_less);
    all.insert(all.end(), extra.begin(), extra.end());
    return all;
  };

  ClosureResult result;
  std::vector<Exponents> current = assemble();
  for (int round = 1; round <= max_rounds; ++round) {
    result.rounds = round;
    int max_degree = 0;
    for (const auto& e : current) max_degree = std::max(max_degree, total_degree(e));
    const int cap = 2 * max_degree;
    std::set<Exponents> have(current.begin(), current.end());
    std::set<Exponents> needed;
    bool over_cap = false;
    for (const auto& e : current) {
      const Polynomial adv = advance(Polynomial::monomial(e), field, kind);
      for (const auto& [term, c] : adv.terms()) {
        if (have.contains(term)) continue;
        if (total_degree(term) > cap) {
          over_cap = true;
          continue;
        }
        needed.insert(term);
      }
    }
    if (needed.empty() && !over_cap) {
      result.closed = true;
      result.observables = current;
      return result;
    }
    extra.insert(extra.end(), needed.begin(), needed.end());
    current = assemble();
  }
  result.observables = current;
  return result;
}

/// Exact Koopman model of a polynomial system on a monomial library, with K
/// read off symbolically. Throws InvalidArgument when the library is not
/// invariant under the system.
[[nodiscard]] inline KoopmanModel symbolic_model(const std::vector<Polynomial>& field, TimeKind kind,
                                                 const ObservableLibrary& lib) {
  if (!lib.all_monomial()) throw InvalidArgument("symbolic_model: library must be polynomial");
  const auto m = static_cast<Eigen::Index>(lib.size());
  Mat k = Mat::Zero(m, m);
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const Polynomial adv = advance(lib.polynomial(i), field, kind);
    for (const auto& [term, c] : adv.terms()) {
      const auto j = lib.find(Observable::monomial(term));
      if (!j) throw InvalidArgument("symbolic_model: advance of '" + lib[i].label() + "' leaves the library");
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*j)) = c;
    }
  }
  const std::vector<std::size_t> rows = lib.state_inclusive() ? detail::leading_rows(lib.dim()) : std::vector<std::size_t>{};
  return {lib, k, kind, rows, {}};
}

/// First time at which the lifted prediction of the state departs from
/// `exact(t)` by more than `tol` relative error; `t_end` when it never does.
/// Continuous models step by expm(K dt); discrete models step once per unit time.
[[nodiscard]] inline double prediction_horizon(const KoopmanModel& model, const Vec& x0,
                                               const std::function<Vec(double)>& exact, double t_end,
                                               double dt = 1.0, double tol = 0.1) {
  model.validate();
  if (!(dt > 0.0) || !(t_end > 0.0)) throw InvalidArgument("prediction_horizon: dt and t_end must be positive");
  const bool continuous = model.time_kind == TimeKind::Continuous;
  const double step_dt = continuous ? dt : 1.0;
  const auto steps = static_cast<Eigen::Index>(std::llround(t_end / step_dt));
  const Mat step = continuous ? expm(model.K, step_dt) : model.K;
  Vec y = lift_state(model, x0);
  for (Eigen::Index k = 1; k <= steps; ++k) {
    y = step * y;
    const double t = static_cast<double>(k) * step_dt;
    const Vec truth = exact(t);
    Vec pred(truth.size());
    for (Eigen::Index i = 0; i < truth.size(); ++i) pred(i) = y(static_cast<Eigen::Index>(model.state_rows[static_cast<std::size_t>(i)]));
    if (!all_finite(pred) || (pred - truth).norm() > tol * truth.norm()) return t;
  }
  return t_end;
}

/// State-inclusive closed lift of a polynomial system, when one exists within max_rounds.
[[nodiscard]] inline std::optional<KoopmanModel> closed_lift(const PolySystem& sys, int max_rounds = 8) {
  const ClosureResult c = complete_closure(sys.field, sys.time_kind, {}, max_rounds);
  if (!c.closed) return std::nullopt;
  return symbolic_model(sys.field, sys.time_kind, ObservableLibrary::from_exponents(sys.dim(), c.observables));
}

}  // namespace koopmankit
