#include "levi/parametrix.hpp"
#include "levi/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace levi;

namespace {

constexpr double pi = std::numbers::pi;

CoefficientField x_sine() { return x_sine_field(1, 1.0, 0.3, 1.0, 0.7, 1.3); }

double a_sine(double x) { return 1.0 + 0.3 * std::sin(x); }

// Heat kernel with diffusivity a over elapsed time dt, and its second x-derivative.
double heat(double a, double dt, double z) { return std::exp(-z * z / (4 * a * dt)) / std::sqrt(4 * pi * a * dt); }
double heat_xx(double a, double dt, double z) {
  const double v = 2 * a * dt;
  return heat(a, dt, z) * (z * z / (v * v) - 1.0 / v);
}

ParametrixConfig light_config() {
  ParametrixConfig c;
  c.time_nodes = 16;
  c.space_nodes_per_dim = 24;
  c.grid.tau_nodes = 16;
  c.grid.xi_nodes_per_dim = 33;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  ParametrixConfig c;
  CHECK_NOTHROW(c.validate());
  c.eps0 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.K_max = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.space_nodes_per_dim = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ParametrixConfig{}.canonical() == ParametrixConfig{}.canonical());
}

TEST_CASE("levi kernel from the coefficient difference and the frozen Hessian") {
  const double v = levi_kernel(x_sine(), 0.1, point1(0.5), 0.0, point1(0.0));
  const double expected = (a_sine(0.5) - a_sine(0.0)) * heat_xx(a_sine(0.0), 0.1, 0.5);
  CHECK(v == doctest::Approx(expected).epsilon(1e-13));
  CHECK(levi_kernel(x_sine(), 0.1, point1(0.3), 0.0, point1(0.3)) == 0.0);
  SymMat a(1, 1);
  a << 1.0;
  CHECK(levi_kernel(constant_field(a, 1.0, 1.0), 0.1, point1(0.5), 0.0, point1(0.0)) == 0.0);
  CHECK_THROWS_AS(levi_kernel(x_sine(), 0.0, point1(0.5), 0.1, point1(0.0)), ConfigError);
}

TEST_CASE("w0 agrees with nested adaptive quadrature") {
  const double t = 0.3, x = 0.4, tau = 0.0, xi = 0.0;
  const LeviSeries series(x_sine(), {t, point1(x)}, t - tau, light_config());
  // int_tau^t int_R Phi^y(t, x, s, y) K(s, y; tau, xi) dy ds with s = tau + (t - tau) u^2.
  auto inner = [&](double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double s = tau + (t - tau) * u * u;
    const double width = 10.0 * std::sqrt(1.3 * (s - tau)) + 10.0 * std::sqrt(1.3 * (t - s));
    auto f = [&](double y) {
      const double k = (a_sine(y) - a_sine(xi)) * heat_xx(a_sine(xi), s - tau, y - xi);
      return heat(a_sine(y), t - s, x - y) * k;
    };
    const double c = 0.5 * (x + xi);
    return 2.0 * (t - tau) * u * integrate_adaptive(f, c - width, c + width, 1e-10);
  };
  const double reference = integrate_adaptive(inner, 0.0, 1.0, 1e-8);
  CHECK(series.w0(tau, point1(xi)) == doctest::Approx(reference).epsilon(1e-4));
}

TEST_CASE("space-independent fields produce no Levi terms") {
  const CoefficientField f = t_sine_field(1, 2.0, 1.0, 1.0, 1.0, 3.0);
  const LeviSeries series(f, {1.0, point1(0.0)}, 1.0, light_config());
  CHECK(series.w0(0.5, point1(0.2)) == 0.0);
  CHECK(series.gamma(0.5, point1(0.2)) == series.frozen(0.5, point1(0.2)));
}

TEST_CASE("horizon beyond delta0 squared is a guard-rail error") {
  ParametrixConfig c = light_config();
  c.delta0 = 0.5;
  CHECK_THROWS_AS(LeviSeries(x_sine(), {1.0, point1(0.0)}, 0.3, c), GuardRailError);
  CHECK_NOTHROW(LeviSeries(x_sine(), {1.0, point1(0.0)}, 0.25, c));
}

TEST_CASE("series terms contract on the x_sine field") {
  const LeviSeries series(x_sine(), {0.25, point1(0.0)}, 0.25, light_config());
  const SeriesTrace& tr = series.trace();
  REQUIRE(tr.term_norms.size() >= 2);
  for (double r : tr.ratios) CHECK(r <= 0.6);
  CHECK(tr.max_ratio <= 0.6);
  // Interpolated w0 reproduces direct quadrature at an off-grid source.
  CHECK(series.tabulated(0, 0.1, point1(0.15)) == doctest::Approx(series.w0(0.1, point1(0.15))).epsilon(2e-2));
}

TEST_CASE("build_short_time enforces causality and a stable digest") {
  std::vector<SpaceTimePoint> targets{{0.2, point1(0.0)}, {0.2, point1(0.5)}};
  std::vector<SpaceTimePoint> sources{{0.0, point1(0.0)}, {0.1, point1(0.2)}, {0.3, point1(0.0)}};
  const ShortTimeBuild a = build_short_time(x_sine(), targets, sources, light_config());
  const ShortTimeBuild b = build_short_time(x_sine(), targets, sources, light_config());
  CHECK(a.grid.values(0, 2) == 0.0);
  CHECK(a.grid.values(1, 2) == 0.0);
  CHECK(a.grid.values(0, 0) > 0.0);
  CHECK(a.grid.config_digest == b.grid.config_digest);
  CHECK((a.grid.values.array() == b.grid.values.array()).all());
  CHECK(a.grid.method == KernelMethod::parametrix);
}

TEST_CASE("delta0 on vanishing, power-law and non-Dini moduli") {
  const BoundConstants c = full_bound_constants(0.7, 1.3, 0.5, 1, 0.5);
  ModulusProfile p;
  p.radii = dyadic_radii(0, 14);
  p.values.assign(p.radii.size(), 0.0);
  CHECK(std::isinf(delta0(p, c)));

  const double amp = 0.3, alpha = 0.5;
  p.values.clear();
  for (double r : p.radii) p.values.push_back(amp * std::pow(r, alpha));
  // 2 C0' C1 C2 (amp / alpha) delta^alpha = eps0.
  const double expected = std::pow(0.5 * alpha / (2 * c.C0_prime * c.C1 * c.C2 * amp), 1.0 / alpha);
  CHECK(delta0(p, c) == doctest::Approx(expected).epsilon(1e-9));

  p.values.clear();
  for (double r : p.radii) p.values.push_back(r < std::exp(-2.0) ? 1.0 / std::log(1.0 / r) : 0.5);
  CHECK_THROWS_AS(delta0(p, c), GuardRailError);
}

TEST_CASE("frozen grid for constant coefficients is the heat kernel") {
  SymMat a(1, 1);
  a << 1.0;
  const KernelGrid g = frozen_grid(constant_field(a, 1.0, 1.0), {{1.0, point1(0.0)}}, {{0.0, point1(0.0)}});
  CHECK(g.values(0, 0) == doctest::Approx(1.0 / std::sqrt(4 * pi)).epsilon(1e-15));
}

TEST_CASE("semigroup extension of the heat kernel") {
  SymMat a(1, 1);
  a << 1.0;
  const CoefficientField f = constant_field(a, 1.0, 1.0);
  std::vector<SpaceTimePoint> targets{{1.0, point1(0.0)}, {1.0, point1(1.0)}};
  std::vector<SpaceTimePoint> sources{{0.0, point1(0.0)}};
  CompositionGrid g;
  g.centre = point1(0.0);
  g.half_width = 12.0;
  g.nodes_per_dim = 401;
  const CompositionResult r = extend_semigroup(frozen_evaluator(f), targets, sources, 1.0, 0.25, g);
  CHECK(r.grid.values(0, 0) == doctest::Approx(heat(1.0, 1.0, 0.0)).epsilon(1e-6));
  CHECK(r.grid.values(1, 0) == doctest::Approx(heat(1.0, 1.0, 1.0)).epsilon(1e-6));
  CHECK_THROWS_AS(extend_semigroup(frozen_evaluator(f), targets, sources, 1.0, 0.25, g, 0.4), GuardRailError);
}
