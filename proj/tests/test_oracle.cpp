#include "levi/oracle.hpp"
#include "levi/parametrix.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace levi;

namespace {

double heat(double a, double dt, double z) {
  return std::exp(-z * z / (4 * a * dt)) / std::sqrt(4 * std::numbers::pi * a * dt);
}

CoefficientField unit_field() { return constant_field(SymMat::Constant(1, 1, 1.0), 1.0, 1.0); }

}  // namespace

TEST_CASE("grid spec validation") {
  FDGridSpec s;
  CHECK_NOTHROW(s.validate());
  s.nodes_per_dim = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.theta = 0.2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.dt = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("finite-difference oracle reproduces the heat kernel") {
  FDGridSpec spec;
  spec.nodes_per_dim = 801;
  spec.dt = 1e-3;
  spec.theta = 0.5;
  const auto targets = tensor_points({0.5}, point1(0.0), 2.0, 9);
  const FDResult r = gamma_eps(unit_field(), {0.0, point1(0.0)}, 0.02, spec, 0.5, targets);
  double worst = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    worst = std::max(worst, std::abs(r.grid.values(i, 0) - heat(1.0, 0.5, targets[i].x(0))));
  CHECK(worst <= 1e-3 * heat(1.0, 0.5, 0.0));
  CHECK(r.grid.method == KernelMethod::fd_oracle);
  // Total mass of the discrete solution stays one after the source switches off.
  CHECK(r.mass_trace.back().second == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("oracle guards the box margin") {
  FDGridSpec spec;
  spec.half_width = 1.0;
  spec.nodes_per_dim = 101;
  CHECK_THROWS_AS(gamma_eps(unit_field(), {0.0, point1(0.0)}, 0.05, spec, 0.5, {{0.5, point1(0.0)}}),
                  GuardRailError);
}

TEST_CASE("mass check on the frozen kernel") {
  const auto sources = tensor_points({0.0, 0.3}, point1(0.0), 12.0, 241);
  const KernelGrid g = frozen_grid(unit_field(), {{1.0, point1(0.0)}, {1.0, point1(0.7)}}, sources);
  const MassReport r = mass_check(g, 1.0);
  CHECK(r.entries.size() == 4);
  CHECK(r.max_deviation <= 1e-8);
  const auto narrow = tensor_points({0.0}, point1(0.0), 1.0, 41);
  CHECK_THROWS_AS(mass_check(frozen_grid(unit_field(), {{1.0, point1(0.0)}}, narrow), 1.0), VerificationError);
}

TEST_CASE("Chapman-Kolmogorov for the frozen kernel") {
  const CoefficientField f = unit_field();
  const std::vector<SpaceTimePoint> targets{{1.0, point1(0.0)}, {1.0, point1(0.5)}};
  const std::vector<SpaceTimePoint> sources{{0.0, point1(0.0)}, {0.0, point1(-0.3)}};
  const auto mid = tensor_points({0.4}, point1(0.0), 10.0, 401);
  const KernelGrid A = frozen_grid(f, targets, mid);
  const KernelGrid B = frozen_grid(f, mid, sources);
  const KernelGrid D = frozen_grid(f, targets, sources);
  CHECK(ck_check(A, B, D, 0.4).max_rel_defect <= 1e-8);
  const CKReport gl = ck_check(frozen_evaluator(f), targets, sources, 0.4, point1(0.0), 10.0, 96);
  CHECK(gl.max_rel_defect <= 1e-8);
  CHECK(gl.compared == 4);
}

TEST_CASE("residual check passes the frozen kernel and flags a corrupted row") {
  const CoefficientField f = unit_field();
  const auto targets = tensor_points(linspace(0.5, 1.0, 11), point1(0.0), 2.0, 81);
  const KernelGrid g = frozen_grid(f, targets, {{0.0, point1(0.0)}});
  const ResidualReport ok = residual_check(g, f, 0.3);
  CHECK_FALSE(ok.flagged);
  CHECK(ok.evaluated > 0);
  KernelGrid bad = g;
  bad.values.row(5 * 81 + 40) *= 10.0;
  CHECK(residual_check(bad, f, 0.3).flagged);
  CHECK_THROWS_AS(residual_check(frozen_grid(f, {{1.0, point1(0.0)}}, {{0.0, point1(0.0)}}), f, 0.3),
                  ConfigError);
}

TEST_CASE("forward and adjoint mollified solutions agree") {
  FDGridSpec spec;
  spec.nodes_per_dim = 401;
  spec.dt = 1e-3;
  const CoefficientField f = x_sine_field(1, 1.0, 0.3, 1.0, 0.7, 1.3);
  const std::vector<SpaceTimePoint> sources{{0.0, point1(0.0)}, {0.0, point1(0.4)}, {0.2, point1(-0.3)}};
  const SymmetryReport r = adjoint_solve_and_symmetry(f, {0.5, point1(0.1)}, 0.05, spec, sources);
  CHECK(r.compared == 3);
  CHECK(r.max_rel_gap <= 5e-2);
}
