#include "levi/frozen_kernel.hpp"

#include "levi/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace levi {

SymMat FrozenKernel::covariance(double s, double t) const {
  if (!(t - s >= kMinTimeGap))
    throw ConfigError("covariance: requires t - s >= 1e-12 (got t - s = " + std::to_string(t - s) + ")");
  const int d = dim();
  if (curve_.time_independent) return 2.0 * (t - s) * curve_(s);

  // Integrate piecewise between breakpoints so jumps in t are exact.
  std::vector<double> cuts{s};
  for (double b : curve_.breakpoints)
    if (b > s && b < t) cuts.push_back(b);
  cuts.push_back(t);
  std::sort(cuts.begin(), cuts.end());

  SymMat sigma = SymMat::Zero(d, d);
  for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
    const double a = cuts[piece];
    const double b = cuts[piece + 1];
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double v = integrate_adaptive([&](double r) { return curve_(r)(i, j); }, a, b, 1e-13);
        sigma(i, j) += 2.0 * v;
        if (i != j) sigma(j, i) += 2.0 * v;
      }
  }
  return 0.5 * (sigma + sigma.transpose());
}

double FrozenKernel::phi(double t, const Point& x, double s, const Point& y) const {
  if (x.size() != dim() || y.size() != dim()) throw ConfigError("phi: dimension mismatch");
  if (t < s) return 0.0;
  return gaussian_density(factors(s, t), Point(x - y));
}

Point FrozenKernel::phi_gradient(double t, const Point& x, double s, const Point& y) const {
  if (x.size() != dim() || y.size() != dim()) throw ConfigError("phi_gradient: dimension mismatch");
  if (!(t > s)) throw ConfigError("phi_gradient: requires t > s");
  return gaussian_gradient(factors(s, t), Point(x - y));
}

SymMat FrozenKernel::phi_hessian(double t, const Point& x, double s, const Point& y) const {
  if (x.size() != dim() || y.size() != dim()) throw ConfigError("phi_hessian: dimension mismatch");
  if (!(t > s)) throw ConfigError("phi_hessian: requires t > s");
  return gaussian_hessian(factors(s, t), Point(x - y));
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::derived_formula: return "derived_formula";
    case Provenance::numeric_optimization: return "numeric_optimization";
    case Provenance::config_override: return "config_override";
  }
  return "unknown";
}

namespace {

// sup over lambda I <= A <= Lambda I and z of
// sum_ij |D^2 Phi_ij| / ((1 + |z|^2) exp(-kappa0 |z|^2)) at t - s = 1.
double hessian_envelope_constant(double lambda, double Lambda, int dim, double kappa0) {
  const int n_a = lambda == Lambda ? 1 : 21;
  auto a_value = [&](int i) { return n_a == 1 ? lambda : lambda + (Lambda - lambda) * i / (n_a - 1); };
  const double z_max = 14.0 * std::sqrt(Lambda);
  const int n_z = dim == 1 ? 4001 : 401;

  auto ratio = [&](const SymMat& a, const Point& z) {
    const SpdFactors<double> f = spd_factors(SymMat(2.0 * a));
    const SymMat h = gaussian_hessian(f, z);
    const double r2 = z.squaredNorm();
    return h.cwiseAbs().sum() / ((1.0 + r2) * std::exp(-kappa0 * r2));
  };

  double best = 0.0;
  if (dim == 1) {
    for (int i = 0; i < n_a; ++i) {
      const SymMat a = SymMat::Constant(1, 1, a_value(i));
      for (int k = 0; k < n_z; ++k) best = std::max(best, ratio(a, point1(z_max * k / (n_z - 1))));
    }
    return best;
  }
  // Diagonal coefficient sets, rotated in the (x1, x2) plane; directions on a
  // half circle in the same plane plus the remaining axis for d = 3.
  const int n_rot = 12;
  const int n_dir = 24;
  const int n_a_small = lambda == Lambda ? 1 : 5;
  auto a_small = [&](int i) {
    return n_a_small == 1 ? lambda : lambda + (Lambda - lambda) * i / (n_a_small - 1);
  };
  std::vector<int> idx(dim, 0);
  const int combos = static_cast<int>(std::pow(n_a_small, dim));
  for (int c = 0; c < combos; ++c) {
    int rem = c;
    SymMat diag = SymMat::Zero(dim, dim);
    for (int k = 0; k < dim; ++k) {
      diag(k, k) = a_small(rem % n_a_small);
      rem /= n_a_small;
    }
    for (int r = 0; r < n_rot; ++r) {
      const double th = std::numbers::pi * r / n_rot;
      SymMat rot = SymMat::Identity(dim, dim);
      rot(0, 0) = std::cos(th);
      rot(0, 1) = -std::sin(th);
      rot(1, 0) = std::sin(th);
      rot(1, 1) = std::cos(th);
      const SymMat a = rot * diag * rot.transpose();
      for (int q = 0; q < n_dir + (dim == 3 ? 1 : 0); ++q) {
        Point e = Point::Zero(dim);
        if (q < n_dir) {
          const double ph = std::numbers::pi * q / n_dir;
          e(0) = std::cos(ph);
          e(1) = std::sin(ph);
        } else {
          e(2) = 1.0;
        }
        for (int k = 0; k < n_z; ++k) best = std::max(best, ratio(a, Point(e * (z_max * k / (n_z - 1)))));
      }
    }
  }
  return best;
}

}  // namespace

BoundConstants bound_constants(double lambda, double Lambda, double kappa_ratio, int dim) {
  if (!(lambda > 0.0)) throw ConfigError("bound_constants: lambda must be positive");
  if (!(Lambda >= lambda)) throw ConfigError("bound_constants: Lambda must be >= lambda");
  if (!(kappa_ratio > 0.0 && kappa_ratio < 1.0))
    throw ConfigError("bound_constants: kappa ratio must be in (0, 1)");
  if (dim < 1 || dim > kMaxDim) throw ConfigError("bound_constants: unsupported dimension");
  BoundConstants c;
  c.dim = dim;
  c.kappa0 = 1.0 / (4.0 * Lambda);
  c.C0 = std::pow(4.0 * std::numbers::pi * lambda, -0.5 * dim);
  c.kappa0_prime = kappa_ratio * c.kappa0;
  c.C2 = std::pow(std::numbers::pi / c.kappa0_prime, 0.5 * dim);
  c.C0_prime = hessian_envelope_constant(lambda, Lambda, dim, c.kappa0);
  c.provenance["C0"] = Provenance::derived_formula;
  c.provenance["kappa0"] = Provenance::derived_formula;
  c.provenance["kappa0_prime"] = Provenance::derived_formula;
  c.provenance["C2"] = Provenance::derived_formula;
  c.provenance["C0_prime"] = Provenance::numeric_optimization;
  return c;
}

double c1_constant(double kappa0, double kappa0_prime) {
  if (!(kappa0_prime > 0.0 && kappa0_prime < kappa0))
    throw ConfigError("c1_constant: requires 0 < kappa0' < kappa0");
  const double gap = kappa0 - kappa0_prime;
  auto f = [gap](double u) {
    return std::max(2.0 * std::sqrt(u) * (1.0 + u), 1.0 + u) * std::exp(-gap * u);
  };
  // Coarse bracketing on a log axis, then golden section in log u.
  const double lo = std::log(1e-8 / gap);
  const double hi = std::log(200.0 / gap);
  const int n = 400;
  double best_v = f(0.0);
  int best_k = -1;
  for (int k = 0; k < n; ++k) {
    const double v = f(std::exp(lo + (hi - lo) * k / (n - 1)));
    if (v > best_v) {
      best_v = v;
      best_k = k;
    }
  }
  if (best_k < 0) return best_v;
  double a = lo + (hi - lo) * std::max(best_k - 1, 0) / (n - 1);
  double b = lo + (hi - lo) * std::min(best_k + 1, n - 1) / (n - 1);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(std::exp(c));
  double fd = f(std::exp(d));
  for (int iter = 0; iter < 200 && b - a > 1e-14; ++iter) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(std::exp(d));
    }
  }
  return std::max({best_v, fc, fd});
}

BoundConstants full_bound_constants(double lambda, double Lambda, double kappa_ratio, int dim,
                                    double eps0) {
  if (!(eps0 > 0.0 && eps0 < 1.0)) throw ConfigError("eps0 must be in (0, 1)");
  BoundConstants c = bound_constants(lambda, Lambda, kappa_ratio, dim);
  c.C1 = c1_constant(c.kappa0, c.kappa0_prime);
  c.eps0 = eps0;
  c.provenance["C1"] = Provenance::numeric_optimization;
  c.provenance["eps0"] = Provenance::derived_formula;
  return c;
}

double gaussian_integral_quadrature(double kappa, int dim, int nodes) {
  if (!(kappa > 0.0)) throw ConfigError("gaussian_integral_quadrature: kappa must be positive");
  const double half = std::sqrt(std::log(1e16) / kappa) * 1.2;
  const Rule1D rule = gauss_legendre(nodes, -half, half);
  double one_d = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i)
    one_d += rule.weights[i] * std::exp(-kappa * rule.nodes[i] * rule.nodes[i]);
  // The integrand factorises over the axes; the tensor sum is the product.
  return std::pow(one_d, dim);
}

ReproducingReport reproducing_identity_check(double kappa0_prime, int dim, double s, double tau,
                                             double t, const Point& x, const Point& xi,
                                             const ReproducingQuad& quad) {
  if (!(tau < s && s < t)) throw ConfigError("reproducing_identity_check: requires tau < s < t");
  if (x.size() != dim || xi.size() != dim)
    throw ConfigError("reproducing_identity_check: dimension mismatch");
  const double a = t - s;
  const double b = s - tau;
  // The integrand is a Gaussian in y centred at the weighted mean of x and xi.
  const Point centre = (b * x + a * xi) / (a + b);
  const double precision = kappa0_prime * (a + b) / (a * b);
  const double radius = std::sqrt(std::log(1.0 / quad.tol) / precision) * quad.truncation_scale;
  const Rule1D rule = gauss_legendre(quad.nodes, -radius, radius);

  auto integrand = [&](const Point& y) {
    return std::pow(a, -0.5 * dim) * std::exp(-kappa0_prime * (x - y).squaredNorm() / a) *
           std::pow(b, -0.5 * dim) * std::exp(-kappa0_prime * (y - xi).squaredNorm() / b);
  };

  double lhs = 0.0;
  const std::size_t n = rule.size();
  std::size_t total = 1;
  for (int k = 0; k < dim; ++k) total *= n;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Point y = centre;
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      const std::size_t i = rem % n;
      rem /= n;
      y(k) += rule.nodes[i];
      w *= rule.weights[i];
    }
    lhs += w * integrand(y);
  }
  ReproducingReport rep;
  rep.lhs = lhs;
  const double c2 = std::pow(std::numbers::pi / kappa0_prime, 0.5 * dim);
  rep.rhs = c2 * std::pow(t - tau, -0.5 * dim) * std::exp(-kappa0_prime * (x - xi).squaredNorm() / (t - tau));
  rep.abs_err = std::abs(rep.lhs - rep.rhs);
  return rep;
}

}  // namespace levi
