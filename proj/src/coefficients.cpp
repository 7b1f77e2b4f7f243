#include "levi/coefficients.hpp"

#include "levi/quadrature.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace levi {

CoefficientField::CoefficientField(int dim, Evaluator eval, double lambda, double Lambda,
                                   FieldKind kind, FieldTraits traits)
    : dim_(dim),
      eval_(std::move(eval)),
      lambda_(lambda),
      Lambda_(Lambda),
      kind_(kind),
      traits_(std::move(traits)) {
  if (dim < 1 || dim > kMaxDim)
    throw ConfigError("coefficient field: dimension must be in [1, " + std::to_string(kMaxDim) +
                      "]");
  if (!(lambda > 0.0)) throw ConfigError("coefficient field: lambda must be positive");
  if (!(Lambda >= lambda)) throw ConfigError("coefficient field: Lambda must be >= lambda");
}

SymMat evaluate(const CoefficientField& field, double t, const Point& x) {
  if (x.size() != field.dim())
    throw ConfigError("evaluate: point has dimension " + std::to_string(x.size()) +
                      ", field has " + std::to_string(field.dim()));
  const SymMat m = field(t, x);
  return 0.5 * (m + m.transpose());
}

namespace {

SymMat scaled_identity(int dim, double a) {
  SymMat m = SymMat::Identity(dim, dim);
  return a * m;
}

}  // namespace

CoefficientField constant_field(const SymMat& a, double lambda, double Lambda) {
  FieldTraits traits;
  traits.time_independent = true;
  traits.space_independent = true;
  traits.family = "const";
  const SymMat value = a;
  return CoefficientField(
      static_cast<int>(a.rows()), [value](double, const Point&) { return value; }, lambda, Lambda,
      FieldKind::closed_form_registry_entry, traits);
}

CoefficientField t_sine_field(int dim, double base, double amp, double freq, double lambda,
                              double Lambda) {
  FieldTraits traits;
  traits.space_independent = true;
  traits.family = "t_sine";
  return CoefficientField(
      dim,
      [=](double t, const Point&) { return scaled_identity(dim, base + amp * std::sin(freq * t)); },
      lambda, Lambda, FieldKind::closed_form_registry_entry, traits);
}

CoefficientField x_sine_field(int dim, double base, double amp, double freq, double lambda,
                              double Lambda) {
  FieldTraits traits;
  traits.time_independent = true;
  traits.family = "x_sine";
  return CoefficientField(
      dim,
      [=](double, const Point& x) {
        return scaled_identity(dim, base + amp * std::sin(freq * x(0)));
      },
      lambda, Lambda, FieldKind::closed_form_registry_entry, traits);
}

CoefficientField holder_field(int dim, double base, double amp, double alpha, const Point& center,
                              double cap, double lambda, double Lambda) {
  if (center.size() != dim) throw ConfigError("holder field: center dimension mismatch");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("holder field: alpha must be in (0, 1]");
  FieldTraits traits;
  traits.time_independent = true;
  traits.singular_points = {center};
  traits.family = "holder";
  return CoefficientField(
      dim,
      [=](double, const Point& x) {
        const double r = std::min((x - center).norm(), cap);
        return scaled_identity(dim, base + amp * std::pow(r, alpha));
      },
      lambda, Lambda, FieldKind::closed_form_registry_entry, traits);
}

CoefficientField log_modulus_field(int dim, double base, double amp, const Point& center,
                                   double lambda, double Lambda) {
  if (center.size() != dim) throw ConfigError("log_modulus field: center dimension mismatch");
  FieldTraits traits;
  traits.time_independent = true;
  traits.singular_points = {center};
  traits.family = "log_modulus";
  const double cutoff = std::exp(-2.0);
  return CoefficientField(
      dim,
      [=](double, const Point& x) {
        const double r = (x - center).norm();
        const double phi = r <= 0.0 ? 0.0 : (r < cutoff ? 1.0 / std::log(1.0 / r) : 0.5);
        return scaled_identity(dim, base + amp * phi);
      },
      lambda, Lambda, FieldKind::closed_form_registry_entry, traits);
}

// ---------------------------------------------------------------------------
// Sampled fields

std::size_t SampledGrid::index(std::size_t it, std::size_t i1, std::size_t i2) const {
  const std::size_t n1 = x_nodes[0].size();
  const std::size_t n2 = dim > 1 ? x_nodes[1].size() : 1;
  return (it * n1 + i1) * n2 + i2;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}

std::size_t locate(const std::vector<double>& nodes, double v) {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
  if (it == nodes.end() || std::abs(*it - v) > 1e-12 * (1.0 + std::abs(v)))
    throw ConfigError("sampled field: coordinate not on grid");
  return static_cast<std::size_t>(it - nodes.begin());
}

void unique_sorted(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end(),
                      [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1 + std::abs(a)); }),
          v.end());
}

// Bracketing index and fraction, clamped to the node range.
std::pair<std::size_t, double> bracket(const std::vector<double>& nodes, double v) {
  if (nodes.size() == 1 || v <= nodes.front()) return {0, 0.0};
  if (v >= nodes.back()) return {nodes.size() - 2, 1.0};
  auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - nodes.begin()) - 1;
  return {i, (v - nodes[i]) / (nodes[i + 1] - nodes[i])};
}

}  // namespace

SampledGrid read_sampled_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("sampled field: empty CSV");
  const auto header = split_csv(line);
  SampledGrid grid;
  if (header == std::vector<std::string>{"t", "x1", "a11"}) {
    grid.dim = 1;
  } else if (header == std::vector<std::string>{"t", "x1", "x2", "a11", "a12", "a22"}) {
    grid.dim = 2;
  } else {
    throw ConfigError("sampled field: header must be t,x1,a11 or t,x1,x2,a11,a12,a22");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ConfigError("sampled field: ragged CSV row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("sampled field: no data rows");
  grid.x_nodes.resize(grid.dim);
  for (const auto& r : rows) {
    grid.t_nodes.push_back(r[0]);
    for (int k = 0; k < grid.dim; ++k) grid.x_nodes[k].push_back(r[1 + k]);
  }
  unique_sorted(grid.t_nodes);
  for (auto& axis : grid.x_nodes) unique_sorted(axis);
  std::size_t total = grid.t_nodes.size();
  for (const auto& axis : grid.x_nodes) total *= axis.size();
  if (total != rows.size()) throw ConfigError("sampled field: rows do not form a full tensor grid");
  grid.values.assign(total, SymMat::Zero(grid.dim, grid.dim));
  for (const auto& r : rows) {
    const std::size_t it = locate(grid.t_nodes, r[0]);
    const std::size_t i1 = locate(grid.x_nodes[0], r[1]);
    const std::size_t i2 = grid.dim > 1 ? locate(grid.x_nodes[1], r[2]) : 0;
    SymMat a(grid.dim, grid.dim);
    if (grid.dim == 1) {
      a(0, 0) = r[2];
    } else {
      a << r[3], r[4], r[4], r[5];
    }
    grid.values[grid.index(it, i1, i2)] = a;
  }
  return grid;
}

SampledGrid read_sampled_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sampled field CSV: " + path);
  return read_sampled_csv(in);
}

CoefficientField sampled_field(SampledGrid grid, double lambda, double Lambda) {
  FieldTraits traits;
  traits.time_independent = grid.t_nodes.size() == 1;
  traits.family = "sampled";
  traits.time_breakpoints = grid.t_nodes;
  double spacing = 1.0;
  for (const auto& axis : grid.x_nodes)
    for (std::size_t i = 1; i < axis.size(); ++i) spacing = std::min(spacing, axis[i] - axis[i - 1]);
  const int dim = grid.dim;
  auto shared = std::make_shared<const SampledGrid>(std::move(grid));
  CoefficientField field(
      dim,
      [shared](double t, const Point& x) {
        const SampledGrid& g = *shared;
        const auto [it, ft] = bracket(g.t_nodes, t);
        const auto [i1, f1] = bracket(g.x_nodes[0], x(0));
        const bool has_t = g.t_nodes.size() > 1;
        const bool has_1 = g.x_nodes[0].size() > 1;
        SymMat acc = SymMat::Zero(g.dim, g.dim);
        if (g.dim == 1) {
          for (int a = 0; a <= (has_t ? 1 : 0); ++a)
            for (int b = 0; b <= (has_1 ? 1 : 0); ++b) {
              const double w = (a ? ft : 1 - ft) * (b ? f1 : 1 - f1);
              acc += w * g.values[g.index(it + a, i1 + b)];
            }
          return acc;
        }
        const auto [i2, f2] = bracket(g.x_nodes[1], x(1));
        const bool has_2 = g.x_nodes[1].size() > 1;
        for (int a = 0; a <= (has_t ? 1 : 0); ++a)
          for (int b = 0; b <= (has_1 ? 1 : 0); ++b)
            for (int c = 0; c <= (has_2 ? 1 : 0); ++c) {
              const double w = (a ? ft : 1 - ft) * (b ? f1 : 1 - f1) * (c ? f2 : 1 - f2);
              acc += w * g.values[g.index(it + a, i1 + b, i2 + c)];
            }
        return acc;
      },
      lambda, Lambda, FieldKind::sampled_grid_with_interpolation, traits);
  field.set_resolution(1e-9 * spacing);
  return field;
}

// ---------------------------------------------------------------------------
// Probing

std::string ProbeSpec::describe() const {
  std::ostringstream os;
  os << "halton count=" << count << " start=" << start_index << " t=[" << t_min << "," << t_max
     << "] half_width=" << half_width << " directions=" << directions << " +corners";
  return os.str();
}

ProbeSpec default_probes(int dim) {
  ProbeSpec p;
  p.center = Point::Zero(dim);
  return p;
}

namespace {

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11};

std::vector<SpaceTimePoint> probe_points(const CoefficientField& field, const ProbeSpec& spec) {
  const int d = field.dim();
  if (spec.center.size() != d) throw ConfigError("probe spec: center dimension mismatch");
  std::vector<SpaceTimePoint> pts;
  for (int i = 0; i < spec.count; ++i) {
    const auto idx = spec.start_index + static_cast<unsigned long long>(i);
    SpaceTimePoint p;
    p.t = spec.t_min + (spec.t_max - spec.t_min) * halton(idx, kPrimes[0]);
    p.x = spec.center;
    for (int k = 0; k < d; ++k) p.x(k) += spec.half_width * (2.0 * halton(idx, kPrimes[k + 1]) - 1.0);
    pts.push_back(std::move(p));
  }
  // Corners of the space-time box.
  for (int mask = 0; mask < (1 << (d + 1)); ++mask) {
    SpaceTimePoint p;
    p.t = (mask & 1) ? spec.t_max : spec.t_min;
    p.x = spec.center;
    for (int k = 0; k < d; ++k) p.x(k) += ((mask >> (k + 1)) & 1 ? 1.0 : -1.0) * spec.half_width;
    pts.push_back(std::move(p));
  }
  for (const Point& s : field.traits().singular_points)
    for (double t : {spec.t_min, 0.5 * (spec.t_min + spec.t_max), spec.t_max})
      pts.push_back({t, s});
  pts.push_back({spec.t_min, spec.center});
  return pts;
}

std::vector<Point> probe_directions(int d, int count) {
  std::vector<Point> dirs;
  for (int k = 0; k < d; ++k) {
    Point e = Point::Zero(d);
    e(k) = 1.0;
    dirs.push_back(e);
  }
  if (d == 1) return dirs;
  Point diag = Point::Ones(d);
  dirs.push_back(diag.normalized());
  for (int i = 1; i <= count; ++i) {
    Point e(d);
    for (int k = 0; k < d; ++k) e(k) = 2.0 * halton(static_cast<unsigned long long>(i), kPrimes[k]) - 1.0;
    if (e.norm() > 1e-6) dirs.push_back(e.normalized());
  }
  return dirs;
}

}  // namespace

EllipticityReport check_ellipticity(const CoefficientField& field, const ProbeSpec& probes) {
  const auto pts = probe_points(field, probes);
  const auto dirs = probe_directions(field.dim(), probes.directions);
  EllipticityReport rep;
  rep.lambda_est = std::numeric_limits<double>::infinity();
  rep.Lambda_est = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    const SymMat a = evaluate(field, p.t, p.x);
    for (const auto& e : dirs) {
      const double q = e.dot(a * e);
      rep.lambda_est = std::min(rep.lambda_est, q);
      rep.Lambda_est = std::max(rep.Lambda_est, q);
      ++rep.probes;
    }
  }
  constexpr double tol = 1e-12;
  rep.pass = field.lambda() <= rep.lambda_est + tol && rep.Lambda_est <= field.Lambda() + tol;
  return rep;
}

std::vector<double> dyadic_radii(int k_min, int k_max) {
  std::vector<double> r;
  for (int k = k_max; k >= k_min; --k) r.push_back(std::ldexp(1.0, -k));
  return r;
}

ModulusProfile modulus_continuity(const CoefficientField& field, const std::vector<double>& radii,
                                  const ProbeSpec& probes) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || (i > 0 && radii[i] <= radii[i - 1]))
      throw ConfigError("modulus_continuity: radii must be positive and increasing");
  }
  const auto pts = probe_points(field, probes);
  if (pts.empty()) throw ConfigError("modulus_continuity: empty probe set");
  const auto dirs = probe_directions(field.dim(), probes.directions);
  ModulusProfile prof;
  prof.kind = ModulusKind::uniform_continuity;
  prof.radii = radii;
  prof.values.assign(radii.size(), 0.0);
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    double best = 0.0;
    for (const auto& p : pts) {
      const SymMat a = field(p.t, p.x);
      for (const auto& e : dirs) {
        for (double sign : {1.0, -1.0}) {
          const Point y = p.x + sign * radii[i] * e;
          best = std::max(best, max_abs(field(p.t, y) - a));
          ++pairs;
        }
      }
    }
    prof.values[i] = best;
  }
  prof.sampling_spec = probes.describe() + " pairs=" + std::to_string(pairs);
  return prof;
}

bool check_subadditive(const ModulusProfile& profile, double tol) {
  const auto& r = profile.radii;
  const auto& v = profile.values;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = i; j < r.size(); ++j) {
      const double sum = r[i] + r[j];
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (std::abs(r[k] - sum) <= 1e-9 * sum && v[k] > v[i] + v[j] + tol) return false;
      }
    }
  return true;
}

// ---------------------------------------------------------------------------
// Ball averages and mean oscillation

namespace {

struct BallRule {
  std::vector<Point> offsets;  // in the unit ball
  std::vector<double> weights; // sum to 1
};

BallRule unit_ball_rule(int d, int nodes) {
  BallRule rule;
  if (d == 1) {
    const Rule1D& gl = gauss_legendre(nodes);
    for (std::size_t i = 0; i < gl.size(); ++i) {
      rule.offsets.push_back(point1(gl.nodes[i]));
      rule.weights.push_back(0.5 * gl.weights[i]);
    }
    return rule;
  }
  const Rule1D radial = gauss_legendre(nodes, 0.0, 1.0);
  if (d == 2) {
    const int n_theta = 2 * nodes;
    for (std::size_t i = 0; i < radial.size(); ++i)
      for (int j = 0; j < n_theta; ++j) {
        const double th = 2.0 * std::numbers::pi * (j + 0.5) / n_theta;
        rule.offsets.push_back(point({radial.nodes[i] * std::cos(th), radial.nodes[i] * std::sin(th)}));
        rule.weights.push_back(radial.weights[i] * radial.nodes[i] * (2.0 * std::numbers::pi / n_theta) /
                               std::numbers::pi);
      }
    return rule;
  }
  const Rule1D& polar = gauss_legendre(nodes);
  const int n_phi = 2 * nodes;
  const double volume = 4.0 / 3.0 * std::numbers::pi;
  for (std::size_t i = 0; i < radial.size(); ++i)
    for (std::size_t j = 0; j < polar.size(); ++j)
      for (int k = 0; k < n_phi; ++k) {
        const double rr = radial.nodes[i];
        const double c = polar.nodes[j];
        const double s = std::sqrt(1.0 - c * c);
        const double ph = 2.0 * std::numbers::pi * (k + 0.5) / n_phi;
        rule.offsets.push_back(point({rr * s * std::cos(ph), rr * s * std::sin(ph), rr * c}));
        rule.weights.push_back(radial.weights[i] * rr * rr * polar.weights[j] *
                               (2.0 * std::numbers::pi / n_phi) / volume);
      }
  return rule;
}

}  // namespace

SymMat ball_average(const CoefficientField& field, double t, const Point& x0, double radius,
                    int nodes) {
  if (nodes < 2) throw ConfigError("ball_average: quadrature order must be >= 2");
  const BallRule rule = unit_ball_rule(field.dim(), nodes);
  SymMat acc = SymMat::Zero(field.dim(), field.dim());
  for (std::size_t q = 0; q < rule.offsets.size(); ++q)
    acc += rule.weights[q] * field(t, x0 + radius * rule.offsets[q]);
  return acc;
}

double mean_oscillation(const CoefficientField& field, double r, const SpaceTimePoint& X,
                        const OscillationQuad& quad) {
  if (!(r > 0.0)) throw ConfigError("mean_oscillation: radius must be positive");
  if (quad.time_nodes < 2 || quad.space_nodes < 2)
    throw ConfigError("mean_oscillation: quadrature order must be >= 2 per axis");
  if (X.x.size() != field.dim()) throw ConfigError("mean_oscillation: dimension mismatch");
  const BallRule ball = unit_ball_rule(field.dim(), quad.space_nodes);
  const Rule1D time = gauss_legendre(quad.time_nodes, X.t - r * r, X.t);
  double total = 0.0;
  std::vector<SymMat> samples(ball.offsets.size());
  for (std::size_t i = 0; i < time.size(); ++i) {
    SymMat avg = SymMat::Zero(field.dim(), field.dim());
    for (std::size_t q = 0; q < ball.offsets.size(); ++q) {
      samples[q] = field(time.nodes[i], X.x + r * ball.offsets[q]);
      avg += ball.weights[q] * samples[q];
    }
    double osc = 0.0;
    for (std::size_t q = 0; q < ball.offsets.size(); ++q)
      osc += ball.weights[q] * max_abs(samples[q] - avg);
    total += time.weights[i] * osc;
  }
  return total / (r * r);
}

ModulusProfile mean_oscillation_profile(const CoefficientField& field,
                                        const std::vector<double>& radii, const ProbeSpec& probes,
                                        const OscillationQuad& quad) {
  const auto pts = probe_points(field, probes);
  ModulusProfile prof;
  prof.kind = ModulusKind::mean_oscillation;
  prof.radii = radii;
  prof.values.assign(radii.size(), 0.0);
  for (std::size_t i = 0; i < radii.size(); ++i)
    for (const auto& p : pts)
      prof.values[i] = std::max(prof.values[i], mean_oscillation(field, radii[i], p, quad));
  prof.sampling_spec = probes.describe() + " centres=" + std::to_string(pts.size());
  return prof;
}

// ---------------------------------------------------------------------------
// Dini integral

namespace {

// Integral of v(s)/s over [a, b] inside the segment [ra, rb] with end values
// va, vb: power law when both are positive, linear in s otherwise.
double segment_integral(double ra, double va, double rb, double vb, double a, double b) {
  if (b <= a) return 0.0;
  if (va > 0.0 && vb > 0.0) {
    const double alpha = std::log(vb / va) / std::log(rb / ra);
    if (std::abs(alpha) < 1e-12) return va * std::log(b / a);
    return va / alpha * (std::pow(b / ra, alpha) - std::pow(a / ra, alpha));
  }
  const double slope = (vb - va) / (rb - ra);
  const double c = va - slope * ra;
  return c * std::log(b / a) + slope * (b - a);
}

}  // namespace

DiniResult dini_integral(const ModulusProfile& profile, double r) {
  const auto& radii = profile.radii;
  const auto& vals = profile.values;
  if (radii.empty() || radii.size() != vals.size())
    throw ConfigError("dini_integral: profile is empty");
  if (r > radii.back() * (1.0 + 1e-12))
    throw ConfigError("dini_integral: r exceeds the largest tabulated radius");
  DiniResult res;

  // Local decay exponents at the small-radius end of the table.
  std::vector<double> exponents;
  const std::size_t n_tail = std::min<std::size_t>(radii.size(), 6);
  for (std::size_t i = 0; i + 1 < n_tail; ++i) {
    if (vals[i] > 0.0 && vals[i + 1] > 0.0)
      exponents.push_back(std::log(vals[i + 1] / vals[i]) / std::log(radii[i + 1] / radii[i]));
  }

  if (vals[0] > 0.0) {
    // Cumulative decrease over the last five dyadic terms.
    if (n_tail >= 5 && vals[0] > 0.0) {
      const double factor = vals[4] / vals[0];
      if (factor < 1.05) {
        res.diverged = true;
        res.diagnostic = "tail terms not decaying (cumulative factor " + std::to_string(factor) + ")";
      }
    }
    // Decay exponents drifting to zero (log-type moduli).
    if (!res.diverged && exponents.size() >= 4) {
      bool drifting = true;
      for (std::size_t i = 0; i + 1 < exponents.size(); ++i)
        if (!(exponents[i] < 0.98 * exponents[i + 1])) drifting = false;
      if (drifting && exponents.front() < 0.25) {
        res.diverged = true;
        res.diagnostic = "decay exponent drifting to zero (last " + std::to_string(exponents.front()) +
                         "); ratio test fails";
      }
    }
  }
  if (res.diverged) {
    res.value = std::numeric_limits<double>::infinity();
    return res;
  }

  // Geometric tail below the smallest radius from the last three values.
  double alpha_tail = 1.0;
  if (exponents.size() >= 2) {
    alpha_tail = 0.5 * (exponents[0] + exponents[1]);
  } else if (exponents.size() == 1) {
    alpha_tail = exponents[0];
  }
  if (vals[0] > 0.0 && !(alpha_tail > 0.0)) {
    res.diverged = true;
    res.value = std::numeric_limits<double>::infinity();
    res.diagnostic = "non-positive tail exponent";
    return res;
  }

  const double r0 = radii[0];
  if (r <= r0) {
    res.tail = vals[0] > 0.0 ? vals[0] * std::pow(r / r0, alpha_tail) / alpha_tail : 0.0;
    res.value = res.tail;
    return res;
  }
  res.tail = vals[0] > 0.0 ? vals[0] / alpha_tail : 0.0;
  double total = res.tail;
  for (std::size_t i = 0; i + 1 < radii.size() && radii[i] < r; ++i) {
    const double b = std::min(r, radii[i + 1]);
    total += segment_integral(radii[i], vals[i], radii[i + 1], vals[i + 1], radii[i], b);
  }
  res.value = total;
  return res;
}

void write_profile_csv(std::ostream& out, const ModulusProfile& profile) {
  out << "r,value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < profile.radii.size(); ++i)
    out << profile.radii[i] << ',' << profile.values[i] << '\n';
}

// ---------------------------------------------------------------------------
// Freezing

TimeCurve slice(const CoefficientField& field, const Point& x0) {
  if (x0.size() != field.dim()) throw ConfigError("slice: dimension mismatch");
  TimeCurve c;
  c.anchor = x0;
  c.eval = [field, x0](double t) { return evaluate(field, t, x0); };
  c.derivation = CurveDerivation::exact_slice;
  c.time_independent = field.time_independent();
  c.breakpoints = field.traits().time_breakpoints;
  c.lambda = field.lambda();
  c.Lambda = field.Lambda();
  return c;
}

TimeCurve constant_curve(const SymMat& a) {
  TimeCurve c;
  c.anchor = Point::Zero(a.rows());
  c.eval = [a](double) { return a; };
  c.time_independent = true;
  Eigen::SelfAdjointEigenSolver<SymMat> es(a);
  c.lambda = es.eigenvalues().minCoeff();
  c.Lambda = es.eigenvalues().maxCoeff();
  return c;
}

FreezeResult freeze(const CoefficientField& field, const Point& x0, double r, int depth,
                    const FreezeSpec& spec) {
  if (!(r > 0.0)) throw ConfigError("freeze: radius must be positive");
  if (depth < 1) throw ConfigError("freeze: depth must be >= 1");
  if (x0.size() != field.dim()) throw ConfigError("freeze: dimension mismatch");
  const double finest = std::ldexp(r, -depth);
  if (!(finest >= field.resolution()))
    throw ConfigError("freeze: radius 2^-depth r underflows the field resolution");

  FreezeResult out;
  const int nodes = spec.space_nodes;
  out.curve.anchor = x0;
  out.curve.derivation = CurveDerivation::averaged_limit;
  out.curve.time_independent = field.time_independent();
  out.curve.breakpoints = field.traits().time_breakpoints;
  out.curve.lambda = field.lambda();
  out.curve.Lambda = field.Lambda();
  out.curve.eval = [field, x0, finest, nodes](double t) {
    const SymMat m = ball_average(field, t, x0, finest, nodes);
    return SymMat(0.5 * (m + m.transpose()));
  };

  const Rule1D time = gauss_legendre(spec.time_nodes, spec.window_t0, spec.window_t1);
  std::vector<std::vector<SymMat>> averages(depth + 1);
  for (int k = 0; k <= depth; ++k)
    for (double t : time.nodes) averages[k].push_back(ball_average(field, t, x0, std::ldexp(r, -k), nodes));
  for (int k = 0; k < depth; ++k) {
    double inc = 0.0;
    for (std::size_t i = 0; i < time.size(); ++i)
      inc += time.weights[i] * max_abs(averages[k][i] - averages[k + 1][i]);
    out.increments.push_back(inc);
  }
  return out;
}

}  // namespace levi
