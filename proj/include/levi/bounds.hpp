#pragma once

#include "levi/coefficients.hpp"
#include "levi/kernel_grid.hpp"
#include "levi/types.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace levi {

/// max(|x - y|, sqrt|t - s|).
double parabolic_distance(const SpaceTimePoint& X, const SpaceTimePoint& Y);

/// C dt^{-d/2} exp(-kappa (r / sqrt(dt))^p).
struct GaussianEnvelope {
  double C = 1.0;
  double kappa = 1.0;
  double p = 2.0;
  int d = 1;

  double operator()(double dt, double r) const;
  /// log of the envelope without C.
  double log_shape(double dt, double r) const;
};

struct EnvelopeReport {
  /// sup |Gamma| / (envelope / C): the empirical constant.
  double sup_ratio = 0.0;
  std::size_t argmax_target = 0;
  std::size_t argmax_source = 0;
  /// The maximiser sits on the spatial edge of the target grid.
  bool boundary_flag = false;
  std::size_t evaluated = 0;
};

EnvelopeReport envelope_ratio(const KernelGrid& kernel, const GaussianEnvelope& env);
void write_envelope_csv(std::ostream& out, const KernelGrid& kernel, const GaussianEnvelope& env);

struct WindowReport {
  /// sup |value| |X - Y|^power over 0 < |X - Y| < R0.
  double constant = 0.0;
  std::size_t argmax_target = 0;
  std::size_t argmax_source = 0;
  std::size_t evaluated = 0;
};

/// Empirical C in |Gamma(X, Y)| <= C |X - Y|^{-d} on the window |X - Y| < R0.
WindowReport pointwise_bound_check(const KernelGrid& kernel, double R0);

/// Nonnegative magnitudes of the derivatives of Gamma on a common grid.
struct DerivativeGrids {
  std::optional<KernelGrid> gradient;  // |D_x Gamma|
  std::optional<KernelGrid> hessian;   // |D_x^2 Gamma| (Frobenius)
  std::optional<KernelGrid> time;      // |d_t Gamma|
};

struct DerivativeReport {
  WindowReport gradient;  // power d + 1
  WindowReport second;    // (|d_t Gamma| + |D^2 Gamma|), power d + 2
  WindowReport hessian;   // |D^2 Gamma| alone, power d + 2
  WindowReport time;      // |d_t Gamma| alone, power d + 2
};

DerivativeReport derivative_bound_check(const DerivativeGrids& grids, double R0);

/// Closed forms for Phi^xi with coefficients frozen at each source.
DerivativeGrids frozen_derivative_grids(const CoefficientField& field,
                                        const std::vector<SpaceTimePoint>& targets,
                                        const std::vector<SpaceTimePoint>& sources);

/// Central differences of an evaluator in the target variables, with spatial
/// step hx and time step ht.
DerivativeGrids fd_derivative_grids(const KernelEvaluator& kernel,
                                    const std::vector<SpaceTimePoint>& targets,
                                    const std::vector<SpaceTimePoint>& sources, double hx, double ht);

// ---------------------------------------------------------------------------
// Long-time chaining bound.

struct ChainingBound {
  double C0;
  double kappa0;
  double delta;
  int d;
  double c0;
  double R0;  // crossover in |xi| = |x| / sqrt(t)
  double beta;

  /// Bound on |Gamma(t, x, 0, 0)|.
  double operator()(double t, const Point& x) const;
  /// log of the two-term chained bound at |xi|, without the t^{-d/2} factor.
  double log_chained(double xi) const;
  /// log of the single-step branch C0 exp(-kappa0 |xi|).
  double log_single(double xi) const;
};

/// Prepares the evaluator; c0 defaults to e, beta to kappa0 / 2.
ChainingBound make_chaining_bound(double C0, double kappa0, double delta, int d,
                                  double c0 = 2.718281828459045, double beta = -1.0);

/// Value at (t, x): chained bound for |x|/sqrt(t) > R0, single step otherwise.
double chaining_bound(double C0, double kappa0, double delta, double t, const Point& x);

/// Values of both branches at the crossover.
struct SeamReport {
  double R0 = 0.0;
  double log_single = 0.0;
  double log_chained = 0.0;
  /// exp(log_chained - log_single).
  double jump_factor = 0.0;
};

SeamReport seam_report(const ChainingBound& bound);

/// (k! / alpha) (3 + 1/alpha)^k, evaluated in log space.
double tail_sum_bound(int k, double alpha);
double log_tail_sum_bound(int k, double alpha);
/// sum_{n=2}^{terms+1} (n+1)^k exp(-alpha (n-1)), accumulated in log space.
double tail_sum_direct(int k, double alpha, long terms = 100000);

// ---------------------------------------------------------------------------

struct ExpDecayReport {
  std::size_t violations = 0;
  /// max |Gamma| / (C0 eps^{-d} exp(-kappa0 |x - xi| / eps)), eps = sqrt(t - tau).
  double worst_ratio = 0.0;
  std::size_t checked = 0;
  std::vector<std::pair<std::size_t, std::size_t>> violating;
};

ExpDecayReport exp_decay_check(const KernelGrid& kernel, double C0, double kappa0);
/// Smallest C0 for which exp_decay_check passes at the given kappa0.
double fit_exp_envelope(const KernelGrid& kernel, double kappa0);

KeyValues to_key_values(const EnvelopeReport& r);
KeyValues to_key_values(const WindowReport& r, const std::string& prefix = "");
KeyValues to_key_values(const DerivativeReport& r);
KeyValues to_key_values(const SeamReport& r);
KeyValues to_key_values(const ExpDecayReport& r);

}  // namespace levi
