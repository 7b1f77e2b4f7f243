#include "levi/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace levi;

TEST_CASE("gauss_legendre integrates polynomials up to degree 2n-1 exactly") {
  for (int n : {1, 2, 5, 12, 40}) {
    const Rule1D& r = gauss_legendre(n);
    REQUIRE(r.size() == static_cast<std::size_t>(n));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = (p % 2 == 1) ? 0.0 : 2.0 / (p + 1);
      CHECK(s == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("mapped rule integrates exp on an interval") {
  const Rule1D r = gauss_legendre(20, 0.5, 2.0);
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * std::exp(r.nodes[i]);
  CHECK(s == doctest::Approx(std::exp(2.0) - std::exp(0.5)).epsilon(1e-14));
}

TEST_CASE("adaptive integration of a Gaussian matches erf") {
  const double v = integrate_adaptive([](double x) { return std::exp(-x * x); }, -1.5, 2.0);
  const double exact = 0.5 * std::sqrt(std::numbers::pi) * (std::erf(2.0) + std::erf(1.5));
  CHECK(v == doctest::Approx(exact).epsilon(1e-12));
}

TEST_CASE("halton radical inverse in base 2 and 3") {
  CHECK(halton(1, 2) == doctest::Approx(0.5));
  CHECK(halton(2, 2) == doctest::Approx(0.25));
  CHECK(halton(3, 2) == doctest::Approx(0.75));
  CHECK(halton(1, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(halton(5, 3) == doctest::Approx(7.0 / 9.0));
}

TEST_CASE("gaussian_mass_within is erf of the scaled half-width") {
  CHECK(gaussian_mass_within(1.0, 1.0) == doctest::Approx(0.6826894921370859).epsilon(1e-12));
  CHECK(gaussian_mass_within(3.0, 1.5) == doctest::Approx(std::erf(2.0 / std::sqrt(2.0))).epsilon(1e-12));
}
