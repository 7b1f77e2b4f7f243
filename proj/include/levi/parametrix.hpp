#pragma once

#include "levi/coefficients.hpp"
#include "levi/frozen_kernel.hpp"
#include "levi/kernel_grid.hpp"

#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace levi {

/// Tabulation of w_k(t, x, ., .) for one target: tau = t - H u^2 with u
/// uniform on (0, 1], xi = x + sqrt(t - tau) z with z uniform on a box.
struct TabulationGrid {
  int tau_nodes = 24;
  int xi_nodes_per_dim = 49;
};

struct ParametrixConfig {
  double eps0 = 0.5;
  /// Short horizon: builds require 0 < t - tau <= delta0^2.
  double delta0 = std::numeric_limits<double>::infinity();
  Provenance delta0_provenance = Provenance::derived_formula;
  int K_max = 30;
  double series_tol = 1e-8;
  /// Gauss–Legendre nodes in u for s = tau + (t - tau) u^2.
  int time_nodes = 24;
  /// Gauss–Legendre nodes per dimension for the y integral.
  int space_nodes_per_dim = 32;
  /// Gaussian tail radius in units of the local standard deviation.
  double truncation_multiplier = 8.0;
  /// Allowed excess of the measured term ratio over eps0.
  double contraction_slack = 0.1;
  TabulationGrid grid;

  void validate() const;
  std::string canonical() const;
};

/// sum_ij (a_ij(s, y) - a_ij(s, xi)) D_ij Phi^xi(s, y, tau, xi), with Phi^xi
/// the kernel of the coefficients frozen at xi.
double levi_kernel(const CoefficientField& field, double s, const Point& y, double tau,
                   const Point& xi);

/// Per-target record of the Neumann series.
struct SeriesTrace {
  SpaceTimePoint target;
  double horizon = 0.0;
  /// sup over the tabulation grid of (t - tau)^{d/2} |w_k|.
  std::vector<double> term_norms;
  /// term_norms[k + 1] / term_norms[k].
  std::vector<double> ratios;
  double max_ratio = 0.0;
};

/// Levi series for a fixed target (t, x): tabulates w_0, w_1, ... over the
/// sources (tau, xi) with 0 < t - tau <= horizon, then evaluates
/// Gamma = Phi^xi + sum_k w_k at arbitrary sources in that window.
class LeviSeries {
 public:
  LeviSeries(CoefficientField field, SpaceTimePoint target, double horizon, ParametrixConfig config);

  const SeriesTrace& trace() const { return trace_; }
  int levels() const { return static_cast<int>(levels_.size()); }

  /// w_k(t, x, tau, xi) by direct quadrature (k < levels()).
  double term(int k, double tau, const Point& xi) const;
  /// w_0 by direct quadrature.
  double w0(double tau, const Point& xi) const { return integrate(-1, tau, xi); }
  /// w_{k+1} by applying the integral operator to the tabulated w_k.
  double iterate(int k, double tau, const Point& xi) const { return integrate(k, tau, xi); }
  /// Interpolated w_k at (s, y); zero outside the tabulated box.
  double tabulated(int k, double s, const Point& y) const;

  /// Phi^xi(t, x, tau, xi) + sum_k w_k(t, x, tau, xi).
  double gamma(double tau, const Point& xi) const;
  /// Phi^xi(t, x, tau, xi).
  double frozen(double tau, const Point& xi) const;

 private:
  // Cell of the tabulation grid holding (s, y), with interpolation weights.
  struct Location {
    std::size_t base = 0;  // flat index of the lower corner
    double fu = 0.0;
    double fz[kMaxDim] = {};
    double scale = 0.0;  // (t - s)^{-d/2}
  };
  // Quadrature node of the tabulation integrals: weight times K, and where
  // the node falls in the tabulation grid.
  struct CachedNode {
    double wk;
    Location loc;
  };

  // Calls visit(s, y, a_sy, weight * K(s, y; tau, xi)) at every quadrature
  // node of the (s, y) integral with nonzero kernel.
  template <class Visit>
  void visit_nodes(double tau, const Point& xi, Visit&& visit) const;
  // Integral over (tau, t) x R^d of F(s, y) K(s, y; tau, xi) with F = Phi^y
  // for level < 0 and F = tabulated w_level otherwise.
  double integrate(int level, double tau, const Point& xi) const;
  double first_factor(int level, double s, const Point& y, const SymMat& a_sy) const;
  bool locate(double s, const Point& y, Location& loc) const;
  double interpolate(int k, const Location& loc) const;
  void tabulate();

  CoefficientField field_;
  SpaceTimePoint target_;
  double horizon_;
  ParametrixConfig config_;
  int dim_;
  double z_half_;
  std::vector<double> u_nodes_;  // includes u = 0
  std::vector<double> z_axis_;
  std::size_t z_count_ = 0;      // z_axis_.size()^dim
  std::vector<std::vector<double>> levels_;
  SeriesTrace trace_;
};

struct ShortTimeBuild {
  KernelGrid grid;
  std::vector<SeriesTrace> traces;
};

/// Gamma on every (target, source) pair; requires t - tau <= delta0^2 and
/// enforces the contraction witness max ratio <= eps0 + slack.
ShortTimeBuild build_short_time(const CoefficientField& field,
                                const std::vector<SpaceTimePoint>& targets,
                                const std::vector<SpaceTimePoint>& sources,
                                const ParametrixConfig& config);

/// Largest delta0 with 2 C0' C1 C2 int_0^delta0 rho(s)/s ds <= eps0. Returns
/// +infinity for a vanishing modulus; throws GuardRailError for non-Dini ones.
double delta0(const ModulusProfile& profile, const BoundConstants& constants);

/// Gamma = Phi^xi: exact for coefficients independent of x.
KernelGrid frozen_grid(const CoefficientField& field, const std::vector<SpaceTimePoint>& targets,
                       const std::vector<SpaceTimePoint>& sources);

KernelEvaluator frozen_evaluator(const CoefficientField& field);
KernelEvaluator parametrix_evaluator(const CoefficientField& field, const ParametrixConfig& config);

struct CompositionGrid {
  Point centre;
  double half_width = 4.0;
  int nodes_per_dim = 81;
};

struct CompositionResult {
  KernelGrid grid;
  /// max_i |int Gamma(t, x_i, t_j, eta) d eta - 1| per composition level.
  std::vector<double> mass_drift;
};

/// Gamma over total_span = m step by chaining m short kernels through
/// quadrature on the composition grid at the intermediate times. All targets
/// share t, all sources share s, and t - s = total_span.
CompositionResult extend_semigroup(const KernelEvaluator& short_kernel,
                                   const std::vector<SpaceTimePoint>& targets,
                                   const std::vector<SpaceTimePoint>& sources, double total_span,
                                   double step, const CompositionGrid& composition,
                                   double delta0 = std::numeric_limits<double>::infinity(),
                                   bool time_homogeneous = false, double max_leakage = 0.01);

}  // namespace levi
