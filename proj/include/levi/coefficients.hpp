#pragma once

#include "levi/types.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace levi {

enum class FieldKind { closed_form_registry_entry, sampled_grid_with_interpolation };

/// Structural facts about a field that let the kernels skip work.
struct FieldTraits {
  bool time_independent = false;
  bool space_independent = false;
  /// Times where the field may jump in t; covariance integrals split here.
  std::vector<double> time_breakpoints;
  /// Points where the x-modulus is attained (kinks, cusps); always probed.
  std::vector<Point> singular_points;
  std::string family = "custom";
};

/// Variable coefficient matrix A(t, x) with declared ellipticity bounds
/// lambda |e|^2 <= e^T A e <= Lambda |e|^2. Immutable after construction.
class CoefficientField {
 public:
  using Evaluator = std::function<SymMat(double t, const Point& x)>;

  CoefficientField(int dim, Evaluator eval, double lambda, double Lambda,
                   FieldKind kind = FieldKind::closed_form_registry_entry,
                   FieldTraits traits = {});

  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  FieldKind kind() const { return kind_; }
  const FieldTraits& traits() const { return traits_; }
  bool time_independent() const { return traits_.time_independent; }
  bool space_independent() const { return traits_.space_independent; }

  /// Unchecked evaluation for inner loops.
  SymMat operator()(double t, const Point& x) const { return eval_(t, x); }

  /// Smallest radius the field meaningfully resolves.
  double resolution() const { return resolution_; }
  void set_resolution(double r) { resolution_ = r; }

 private:
  int dim_;
  Evaluator eval_;
  double lambda_;
  double Lambda_;
  FieldKind kind_;
  FieldTraits traits_;
  double resolution_ = 1e-12;
};

/// Checked evaluation; the result is symmetrised as (M + M^T)/2.
SymMat evaluate(const CoefficientField& field, double t, const Point& x);

// Registry of closed-form families. All scalar families are multiples of I.

CoefficientField constant_field(const SymMat& a, double lambda, double Lambda);
/// (base + amp sin(freq t)) I
CoefficientField t_sine_field(int dim, double base, double amp, double freq, double lambda,
                              double Lambda);
/// (base + amp sin(freq x_1)) I
CoefficientField x_sine_field(int dim, double base, double amp, double freq, double lambda,
                              double Lambda);
/// (base + amp min(|x - center|, cap)^alpha) I
CoefficientField holder_field(int dim, double base, double amp, double alpha, const Point& center,
                              double cap, double lambda, double Lambda);
/// (base + amp phi(|x - center|)) I with phi(r) = 1/ln(1/r) below e^{-2} and
/// 1/2 above: continuous, but its modulus fails the Dini condition.
CoefficientField log_modulus_field(int dim, double base, double amp, const Point& center,
                                   double lambda, double Lambda);

/// Rectilinear samples of A over (t, x1[, x2]); interpolated multilinearly and
/// clamped outside the sampled box.
struct SampledGrid {
  int dim = 1;
  std::vector<double> t_nodes;
  std::vector<std::vector<double>> x_nodes;  // one axis per spatial dim
  std::vector<SymMat> values;                // t-major, then x1, then x2

  std::size_t index(std::size_t it, std::size_t i1, std::size_t i2 = 0) const;
};

SampledGrid read_sampled_csv(std::istream& in);
SampledGrid read_sampled_csv_file(const std::string& path);
CoefficientField sampled_field(SampledGrid grid, double lambda, double Lambda);

/// Deterministic probe set: Halton points in [t_min, t_max] x box, plus box
/// corners and the field's singular points.
struct ProbeSpec {
  double t_min = 0.0;
  double t_max = 1.0;
  Point center;
  double half_width = 1.0;
  int count = 256;
  int directions = 8;
  unsigned long long start_index = 1;

  std::string describe() const;
};

ProbeSpec default_probes(int dim);

struct EllipticityReport {
  double lambda_est = 0.0;
  double Lambda_est = 0.0;
  bool pass = false;
  std::size_t probes = 0;
};

EllipticityReport check_ellipticity(const CoefficientField& field, const ProbeSpec& probes);

enum class ModulusKind { mean_oscillation, uniform_continuity };

struct ModulusProfile {
  std::vector<double> radii;
  std::vector<double> values;
  ModulusKind kind = ModulusKind::uniform_continuity;
  std::string sampling_spec;
};

/// 2^{-k} for k = k_max down to k_min, increasing.
std::vector<double> dyadic_radii(int k_min, int k_max);

/// Lower estimate of rho(r) = sup |A(t,x) - A(t,y)| over |x - y| <= r.
ModulusProfile modulus_continuity(const CoefficientField& field, const std::vector<double>& radii,
                                  const ProbeSpec& probes);

/// rho(r1 + r2) <= rho(r1) + rho(r2) at every tabulated pair whose sum is
/// tabulated (relative match 1e-9), within tol.
bool check_subadditive(const ModulusProfile& profile, double tol);

struct OscillationQuad {
  int time_nodes = 8;
  int space_nodes = 16;
};

/// Average over the backward cylinder (t - r^2, t) x B_r(x) of
/// |A(s,y) - avg_{B_r(x)} A(s,.)|.
double mean_oscillation(const CoefficientField& field, double r, const SpaceTimePoint& X,
                        const OscillationQuad& quad);

/// omega(r) profile: sup over the probe centres of mean_oscillation.
ModulusProfile mean_oscillation_profile(const CoefficientField& field,
                                        const std::vector<double>& radii, const ProbeSpec& probes,
                                        const OscillationQuad& quad);

struct DiniResult {
  double value = 0.0;
  bool diverged = false;
  double tail = 0.0;  // extrapolated contribution below the smallest radius
  std::string diagnostic;
};

/// Integral of value(s)/s over (0, r], piecewise power-law between tabulated
/// radii and a geometric tail below the smallest one.
DiniResult dini_integral(const ModulusProfile& profile, double r);

void write_profile_csv(std::ostream& out, const ModulusProfile& profile);

enum class CurveDerivation { exact_slice, averaged_limit };

/// Coefficients frozen at an anchor: a matrix-valued function of t only.
struct TimeCurve {
  Point anchor;
  std::function<SymMat(double)> eval;
  CurveDerivation derivation = CurveDerivation::exact_slice;
  bool time_independent = false;
  std::vector<double> breakpoints;
  double lambda = 1.0;
  double Lambda = 1.0;

  int dim() const { return static_cast<int>(anchor.size()); }
  SymMat operator()(double t) const { return eval(t); }
};

/// A(t, x0) for fields continuous in x.
TimeCurve slice(const CoefficientField& field, const Point& x0);

/// Constant-in-time curve, mostly for tests.
TimeCurve constant_curve(const SymMat& a);

struct FreezeSpec {
  double window_t0 = 0.0;
  double window_t1 = 1.0;
  int time_nodes = 16;
  int space_nodes = 24;
};

struct FreezeResult {
  TimeCurve curve;
  /// L1-in-time distance between averages at radii 2^{-k} r and 2^{-k-1} r.
  std::vector<double> increments;
};

FreezeResult freeze(const CoefficientField& field, const Point& x0, double r, int depth,
                    const FreezeSpec& spec = {});

/// Average of A(t, .) over the ball B_radius(x0) by tensor/polar quadrature.
SymMat ball_average(const CoefficientField& field, double t, const Point& x0, double radius,
                    int nodes);

}  // namespace levi
