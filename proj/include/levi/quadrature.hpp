#pragma once

#include <functional>
#include <vector>

namespace levi {

/// Nodes and weights of a 1-D quadrature rule on a fixed interval.
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// n-point Gauss–Legendre rule on [-1, 1]. Rules are cached per n.
const Rule1D& gauss_legendre(int n);

/// Gauss–Legendre rule mapped onto [a, b].
Rule1D gauss_legendre(int n, double a, double b);

/// Adaptive Gauss–Kronrod integral of f over [a, b] with relative tolerance.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol = 1e-12);

/// Radical-inverse (Halton) coordinate of index i in the given prime base.
double halton(unsigned long long index, unsigned base);

/// Normal CDF mass of the interval [-h, h] for a centred Gaussian of the
/// given standard deviation.
double gaussian_mass_within(double half_width, double stddev);

}  // namespace levi
