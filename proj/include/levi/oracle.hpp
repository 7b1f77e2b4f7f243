#pragma once

#include "levi/coefficients.hpp"
#include "levi/kernel_grid.hpp"

#include <utility>
#include <vector>

namespace levi {

/// Uniform box [centre - L, centre + L]^d, homogeneous Dirichlet data,
/// theta-scheme in time with central differences in space.
struct FDGridSpec {
  /// Box centre; empty means the source (or terminal) point.
  Point centre;
  /// Box half-width L; zero or negative means 8 sqrt(Lambda horizon).
  double half_width = 0.0;
  int nodes_per_dim = 401;
  double dt = 2.5e-4;
  double theta = 1.0;
  /// Replace the mollified source by discrete delta data at time s.
  /// Not the construction used by the theory; for convergence studies only.
  bool initial_delta = false;

  void validate() const;
};

struct FDResult {
  KernelGrid grid;
  /// (time, discrete mass of u) after every step.
  std::vector<std::pair<double, double>> mass_trace;
  KeyValues diagnostics;
};

/// u solving P u = f with f = |Q|^{-1} chi_Q on Q = (s - eps^2, s) x B_eps(y)
/// and u(s - eps^2, .) = 0, sampled at the targets. The source is normalised
/// so that its discrete integral is exactly one.
FDResult gamma_eps(const CoefficientField& field, const SpaceTimePoint& Y, double eps,
                   const FDGridSpec& spec, double horizon, const std::vector<SpaceTimePoint>& targets);

/// One gamma_eps solve per source; horizon is max target t - min source t.
KernelGrid gamma_eps_grid(const CoefficientField& field, const std::vector<SpaceTimePoint>& targets,
                          const std::vector<SpaceTimePoint>& sources, double eps,
                          const FDGridSpec& spec);

KernelEvaluator fd_evaluator(const CoefficientField& field, double eps, const FDGridSpec& spec);

/// v solving -d_t v - D_ij(a^ij v) = f* with f* the mollified mass on
/// (t, t + eps^2) x B_eps(x), sampled at the given points (all before t).
FDResult adjoint_eps(const CoefficientField& field, const SpaceTimePoint& X, double eps,
                     const FDGridSpec& spec, double horizon, const std::vector<SpaceTimePoint>& points);

// ---------------------------------------------------------------------------

struct MassEntry {
  std::size_t target;
  double tau;
  double value;
};

struct MassReport {
  std::vector<MassEntry> entries;
  double max_deviation = 0.0;
  double min_coverage = 1.0;
};

/// Trapezoid quadrature of Gamma(t, x, tau, .) over each regular source slice.
/// Lambda sizes the Gaussian envelope used for the coverage estimate.
MassReport mass_check(const KernelGrid& kernel, double Lambda, double min_coverage = 0.999);

struct CKReport {
  double max_rel_defect = 0.0;
  std::size_t compared = 0;
};

/// Compares int A(t, x, tau_mid, eta) B(tau_mid, eta, s, y) d eta with the
/// direct kernel where direct >= 1e-3 peak. A's sources must equal B's targets
/// and form a regular grid at tau_mid.
CKReport ck_check(const KernelGrid& A, const KernelGrid& B, const KernelGrid& direct, double tau_mid);

/// Same comparison with Gauss-Legendre nodes on [centre +- half_width]^d at
/// tau_mid and kernels evaluated pointwise.
CKReport ck_check(const KernelEvaluator& kernel, const std::vector<SpaceTimePoint>& targets,
                  const std::vector<SpaceTimePoint>& sources, double tau_mid, const Point& centre,
                  double half_width, int nodes_per_dim);

struct ResidualReport {
  /// max |d_t Gamma - a^ij D_ij Gamma| |X - Y|^{d+2} over admissible points.
  double max_scaled = 0.0;
  std::size_t evaluated = 0;
  bool flagged = false;
};

/// Central-difference residual of P Gamma on a kernel whose targets form a
/// regular (t, x) grid, away from the pole.
ResidualReport residual_check(const KernelGrid& kernel, const CoefficientField& field,
                              double exclusion_radius, double flag_tolerance = 1e-2);

struct SymmetryReport {
  double max_rel_gap = 0.0;
  std::size_t compared = 0;
  std::vector<double> forward;  // Gamma_eps(t, x, s, y) per source
  std::vector<double> adjoint;  // Gamma*_eps(s, y, t, x) per source
};

SymmetryReport adjoint_solve_and_symmetry(const CoefficientField& field, const SpaceTimePoint& X,
                                          double eps, const FDGridSpec& spec,
                                          const std::vector<SpaceTimePoint>& sources);

KeyValues to_key_values(const MassReport& r);
KeyValues to_key_values(const CKReport& r);
KeyValues to_key_values(const ResidualReport& r);
KeyValues to_key_values(const SymmetryReport& r);

}  // namespace levi
