#pragma once

#include "levi/coefficients.hpp"
#include "levi/types.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace levi {

/// Covariance differences below this are rejected rather than regularised.
inline constexpr double kMinTimeGap = 1e-12;

/// Inverse and determinant of a small SPD matrix; explicit formulas for
/// d <= 3, LDLT beyond.
template <class Scalar>
struct SpdFactors {
  MatrixD<Scalar> inverse;
  Scalar determinant{};
};

template <class Scalar>
SpdFactors<Scalar> spd_factors(const MatrixD<Scalar>& m) {
  SpdFactors<Scalar> f;
  const auto d = m.rows();
  f.inverse.resize(d, d);
  if (d == 1) {
    f.determinant = m(0, 0);
    f.inverse(0, 0) = Scalar(1) / m(0, 0);
  } else if (d == 2) {
    f.determinant = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    f.inverse << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    f.inverse /= f.determinant;
  } else if (d == 3) {
    MatrixD<Scalar> cof(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, j1 = (j + 1) % 3, j2 = (j + 2) % 3;
        cof(i, j) = m(i1, j1) * m(i2, j2) - m(i1, j2) * m(i2, j1);
      }
    f.determinant = m(0, 0) * cof(0, 0) + m(0, 1) * cof(0, 1) + m(0, 2) * cof(0, 2);
    f.inverse = cof.transpose() / f.determinant;
  } else {
    Eigen::LDLT<MatrixD<Scalar>> ldlt(m);
    f.determinant = ldlt.vectorD().prod();
    f.inverse = ldlt.solve(MatrixD<Scalar>::Identity(d, d));
  }
  return f;
}

/// Gaussian density with covariance `cov` evaluated at offset `diff`:
/// (2 pi)^{-d/2} det(cov)^{-1/2} exp(-diff^T cov^{-1} diff / 2).
template <class Scalar>
Scalar gaussian_density(const SpdFactors<Scalar>& f, const VectorD<Scalar>& diff) {
  using std::exp;
  using std::pow;
  using std::sqrt;
  const auto d = diff.size();
  const Scalar quad = diff.dot(f.inverse * diff);
  return pow(Scalar(2) * std::numbers::pi_v<Scalar>, -Scalar(d) / Scalar(2)) / sqrt(f.determinant) *
         exp(-quad / Scalar(2));
}

/// Gradient of the density in the evaluation point: -phi cov^{-1} diff.
template <class Scalar>
VectorD<Scalar> gaussian_gradient(const SpdFactors<Scalar>& f, const VectorD<Scalar>& diff) {
  const Scalar phi = gaussian_density(f, diff);
  return -phi * (f.inverse * diff);
}

/// Hessian of the density: phi (cov^{-1} diff diff^T cov^{-1} - cov^{-1}).
template <class Scalar>
MatrixD<Scalar> gaussian_hessian(const SpdFactors<Scalar>& f, const VectorD<Scalar>& diff) {
  const Scalar phi = gaussian_density(f, diff);
  const VectorD<Scalar> g = f.inverse * diff;
  return phi * (g * g.transpose() - f.inverse);
}

/// Fundamental solution of d_t - tr(A(t) D^2) for coefficients depending on t
/// only: a Gaussian in x - y with covariance 2 int_s^t A. Immutable.
class FrozenKernel {
 public:
  explicit FrozenKernel(TimeCurve curve) : curve_(std::move(curve)) {}

  int dim() const { return curve_.dim(); }
  const TimeCurve& curve() const { return curve_; }

  /// Sigma(s, t) = 2 int_s^t A(r) dr; requires t - s >= kMinTimeGap.
  SymMat covariance(double s, double t) const;
  SpdFactors<double> factors(double s, double t) const { return spd_factors(covariance(s, t)); }

  /// Zero for t < s; rejects 0 <= t - s < kMinTimeGap.
  double phi(double t, const Point& x, double s, const Point& y) const;
  Point phi_gradient(double t, const Point& x, double s, const Point& y) const;
  SymMat phi_hessian(double t, const Point& x, double s, const Point& y) const;

  /// The adjoint kernel Phi*(s, y, t, x); equals phi(t, x, s, y) because the
  /// coefficients do not depend on x.
  double phi_adjoint(double s, const Point& y, double t, const Point& x) const {
    return phi(t, x, s, y);
  }

 private:
  TimeCurve curve_;
};

enum class Provenance { derived_formula, numeric_optimization, config_override };

std::string to_string(Provenance p);

/// Constants of the Gaussian bounds on frozen kernels and the Levi series.
struct BoundConstants {
  int dim = 1;
  double C0 = 0.0;
  double kappa0 = 0.0;
  double C0_prime = 0.0;
  double kappa0_prime = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double eps0 = 0.5;
  double delta0 = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, Provenance> provenance;
};

/// kappa0 = 1/(4 Lambda), C0 = (4 pi lambda)^{-d/2}, kappa0' = ratio kappa0,
/// C2 = (pi/kappa0')^{d/2}, C0' by numeric maximisation of the normalised
/// Hessian envelope over lambda I <= A <= Lambda I.
BoundConstants bound_constants(double lambda, double Lambda, double kappa_ratio, int dim);

/// sup_{u >= 0} max(2 sqrt(u)(1 + u), 1 + u) exp(-(kappa0 - kappa0') u).
double c1_constant(double kappa0, double kappa0_prime);

/// bound_constants plus C1 and eps0.
BoundConstants full_bound_constants(double lambda, double Lambda, double kappa_ratio, int dim,
                                    double eps0 = 0.5);

/// Quadrature of int_{R^d} exp(-kappa |y|^2) dy on a truncated tensor grid.
double gaussian_integral_quadrature(double kappa, int dim, int nodes = 64);

struct ReproducingQuad {
  int nodes = 64;
  double tol = 1e-12;
  double truncation_scale = 1.0;
};

struct ReproducingReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_err = 0.0;
};

/// Compares int (t-s)^{-d/2} e^{-k|x-y|^2/(t-s)} (s-tau)^{-d/2} e^{-k|y-xi|^2/(s-tau)} dy
/// with C2 (t-tau)^{-d/2} e^{-k|x-xi|^2/(t-tau)}.
ReproducingReport reproducing_identity_check(double kappa0_prime, int dim, double s, double tau,
                                             double t, const Point& x, const Point& xi,
                                             const ReproducingQuad& quad = {});

}  // namespace levi
