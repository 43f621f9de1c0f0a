#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace koopmankit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the arguments do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf found where only finite values are admitted.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Bad argument value (unknown name, missing parameter, out-of-domain input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative kernel did not converge within its iteration budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// State norm exceeded the escape threshold during integration or iteration.
class BlowUp : public Error {
 public:
  BlowUp(const std::string& what, double time) : Error(what), time_(time) {}
  [[nodiscard]] double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A unique eigenvector was required but the eigenvalue is not simple.
class DegenerateSpectrum : public Error {
 public:
  using Error::Error;
};

/// The pair (A, B) has an unstable mode that the input cannot reach.
class NotStabilizable : public Error {
 public:
  NotStabilizable(const std::string& what, std::vector<std::complex<double>> modes)
      : Error(what), modes_(std::move(modes)) {}

  /// Eigenvalues of A that fail the PBH rank test.
  [[nodiscard]] const std::vector<std::complex<double>>& modes() const noexcept { return modes_; }

 private:
  std::vector<std::complex<double>> modes_;
};

}  // namespace koopmankit
