#pragma once

// Sparse multivariate polynomials with real coefficients, keyed by monomial
// exponent vectors. Used for vector fields, maps and the symbolic closure
// checks on lifted models. Arithmetic drops terms whose coefficient becomes
// exactly zero, so a polynomial identity holds iff the difference is empty.

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "koopmankit/errors.hpp"
#include "koopmankit/numerics.hpp"

namespace koopmankit {

/// Exponent vector of a monomial x1^e1 * ... * xn^en.
using Exponents = std::vector<int>;

[[nodiscard]] inline int total_degree(const Exponents& e) {
  return std::accumulate(e.begin(), e.end(), 0);
}

/// Exponent vector of the single coordinate x_{index+1}.
[[nodiscard]] inline Exponents unit_exponents(std::size_t dim, std::size_t index) {
  Exponents e(dim, 0);
  e.at(index) = 1;
  return e;
}

/// Human-readable monomial label: "x1^2*x2", "1" for the constant.
[[nodiscard]] inline std::string monomial_label(const Exponents& e) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] == 0) continue;
    if (!first) os << '*';
    first = false;
    os << 'x' << (i + 1);
    if (e[i] != 1) os << '^' << e[i];
  }
  if (first) return "1";
  return os.str();
}

[[nodiscard]] inline double eval_monomial(const Exponents& e, const Eigen::Ref<const Vec>& x) {
  double v = 1.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (int p = 0; p < e[i]; ++p) v *= x(static_cast<Eigen::Index>(i));
  }
  return v;
}

/// Integer power by repeated multiplication (same rounding as polynomial products).
[[nodiscard]] inline double ipow(double base, int exponent) {
  double v = 1.0;
  for (int p = 0; p < exponent; ++p) v *= base;
  return v;
}

class Polynomial {
 public:
  using Terms = std::map<Exponents, double>;

  Polynomial() = default;
  explicit Polynomial(std::size_t dim) : dim_(dim) {}

  [[nodiscard]] static Polynomial constant(std::size_t dim, double c) {
    Polynomial p(dim);
    p.add_term(Exponents(dim, 0), c);
    return p;
  }

  [[nodiscard]] static Polynomial monomial(const Exponents& e, double c = 1.0) {
    Polynomial p(e.size());
    p.add_term(e, c);
    return p;
  }

  /// The coordinate x_{index+1}.
  [[nodiscard]] static Polynomial variable(std::size_t dim, std::size_t index) {
    return monomial(unit_exponents(dim, index));
  }

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] const Terms& terms() const noexcept { return terms_; }
  [[nodiscard]] bool is_zero() const noexcept { return terms_.empty(); }

  [[nodiscard]] double coeff(const Exponents& e) const {
    const auto it = terms_.find(e);
    return it == terms_.end() ? 0.0 : it->second;
  }

  [[nodiscard]] int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
    return d;
  }

  void add_term(const Exponents& e, double c) {
    if (e.size() != dim_) throw DimensionError("polynomial: exponent length differs from dimension");
    for (int p : e) {
      if (p < 0) throw InvalidArgument("polynomial: negative exponent");
    }
    if (!std::isfinite(c)) throw NonFiniteError("polynomial: non-finite coefficient");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  [[nodiscard]] double operator()(const Eigen::Ref<const Vec>& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_) throw DimensionError("polynomial: state dimension mismatch");
    double v = 0.0;
    for (const auto& [e, c] : terms_) v += c * eval_monomial(e, x);
    return v;
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_dim(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_dim(o);
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
  }
  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [e, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_dim(b);
    Polynomial out(a.dim_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        Exponents e(a.dim_);
        for (std::size_t i = 0; i < a.dim_; ++i) e[i] = ea[i] + eb[i];
        out.add_term(e, ca * cb);
      }
    }
    return out;
  }

  /// Partial derivative with respect to x_{index+1}.
  [[nodiscard]] Polynomial derivative(std::size_t index) const {
    Polynomial out(dim_);
    for (const auto& [e, c] : terms_) {
      if (e.at(index) == 0) continue;
      Exponents d = e;
      d[index] -= 1;
      out.add_term(d, static_cast<double>(e[index]) * c);
    }
    return out;
  }

  /// Lie derivative grad(p) . f along the vector field f.
  [[nodiscard]] Polynomial lie_derivative(const std::vector<Polynomial>& field) const {
    if (field.size() != dim_) throw DimensionError("lie_derivative: field dimension mismatch");
    Polynomial out(dim_);
    for (const auto& [e, c] : terms_) {
      for (std::size_t i = 0; i < dim_; ++i) {
        if (e[i] == 0) continue;
        Exponents d = e;
        d[i] -= 1;
        out += monomial(d, static_cast<double>(e[i]) * c) * field[i];
      }
    }
    return out;
  }

  /// p(g1(x), ..., gn(x)); the substituted polynomials share one dimension.
  [[nodiscard]] Polynomial compose(const std::vector<Polynomial>& subs) const {
    if (subs.size() != dim_) throw DimensionError("compose: substitution count mismatch");
    const std::size_t out_dim = subs.empty() ? 0 : subs.front().dim();
    Polynomial out(out_dim);
    for (const auto& [e, c] : terms_) {
      Polynomial term = constant(out_dim, c);
      for (std::size_t i = 0; i < dim_; ++i) {
        for (int p = 0; p < e[i]; ++p) term = term * subs[i];
      }
      out += term;
    }
    return out;
  }

  [[nodiscard]] std::string to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
      if (!first) os << " + ";
      first = false;
      os << it->second;
      const std::string m = monomial_label(it->first);
      if (m != "1") os << '*' << m;
    }
    return os.str();
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) = default;

 private:
  void check_dim(const Polynomial& o) const {
    if (o.dim_ != dim_) throw DimensionError("polynomial: dimension mismatch");
  }

  std::size_t dim_ = 0;
  Terms terms_;
};

}  // namespace koopmankit
