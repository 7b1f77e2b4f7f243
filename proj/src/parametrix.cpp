#include "levi/parametrix.hpp"

#include "levi/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace levi {

void ParametrixConfig::validate() const {
  if (!(eps0 > 0.0 && eps0 < 1.0)) throw ConfigError("parametrix: eps0 must be in (0, 1)");
  if (!(delta0 > 0.0)) throw ConfigError("parametrix: delta0 must be positive");
  if (K_max < 1) throw ConfigError("parametrix: K_max must be >= 1");
  if (!(series_tol > 0.0)) throw ConfigError("parametrix: series_tol must be positive");
  if (time_nodes < 2 || space_nodes_per_dim < 2)
    throw ConfigError("parametrix: quadrature nodes below minimum (2 per axis)");
  if (grid.tau_nodes < 2 || grid.xi_nodes_per_dim < 3)
    throw ConfigError("parametrix: tabulation grid too small");
  if (!(truncation_multiplier > 0.0)) throw ConfigError("parametrix: truncation multiplier must be positive");
}

std::string ParametrixConfig::canonical() const {
  std::ostringstream os;
  os << "eps0=" << format_double(eps0) << ";delta0=" << format_double(delta0)
     << ";delta0_provenance=" << to_string(delta0_provenance) << ";K_max=" << K_max
     << ";series_tol=" << format_double(series_tol) << ";time_nodes=" << time_nodes
     << ";space_nodes_per_dim=" << space_nodes_per_dim
     << ";truncation_multiplier=" << format_double(truncation_multiplier)
     << ";contraction_slack=" << format_double(contraction_slack) << ";tau_nodes=" << grid.tau_nodes
     << ";xi_nodes_per_dim=" << grid.xi_nodes_per_dim;
  return os.str();
}

namespace {

// Covariance of the coefficients frozen at `anchor` over (s, t).
SymMat frozen_covariance(const CoefficientField& field, const Point& anchor, double s, double t,
                         const SymMat* a_now = nullptr) {
  if (field.time_independent()) return 2.0 * (t - s) * (a_now ? *a_now : field(s, anchor));
  return FrozenKernel(slice(field, anchor)).covariance(s, t);
}

}  // namespace

double levi_kernel(const CoefficientField& field, double s, const Point& y, double tau,
                   const Point& xi) {
  if (y.size() != field.dim() || xi.size() != field.dim())
    throw ConfigError("levi_kernel: dimension mismatch");
  if (!(s - tau >= kMinTimeGap)) throw ConfigError("levi_kernel: requires s > tau");
  const SymMat diff = field(s, y) - field(s, xi);
  if (max_abs(diff) == 0.0) return 0.0;
  const SymMat h = gaussian_hessian(spd_factors(frozen_covariance(field, xi, tau, s)), Point(y - xi));
  return diff.cwiseProduct(h).sum();
}

// ---------------------------------------------------------------------------

LeviSeries::LeviSeries(CoefficientField field, SpaceTimePoint target, double horizon,
                       ParametrixConfig config)
    : field_(std::move(field)),
      target_(std::move(target)),
      horizon_(horizon),
      config_(std::move(config)),
      dim_(field_.dim()) {
  config_.validate();
  if (target_.x.size() != dim_) throw ConfigError("parametrix: target dimension mismatch");
  if (!(horizon_ > 0.0)) throw ConfigError("parametrix: horizon must be positive");
  if (horizon_ > config_.delta0 * config_.delta0 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "parametrix: horizon exceeded (t - tau = " << horizon_
       << " > delta0^2 = " << config_.delta0 * config_.delta0 << ")";
    throw GuardRailError(os.str());
  }
  z_half_ = config_.truncation_multiplier * std::sqrt(field_.Lambda());
  u_nodes_ = linspace(0.0, 1.0, config_.grid.tau_nodes + 1);
  z_axis_ = linspace(-z_half_, z_half_, config_.grid.xi_nodes_per_dim);
  z_count_ = 1;
  for (int k = 0; k < dim_; ++k) z_count_ *= z_axis_.size();
  trace_.target = target_;
  trace_.horizon = horizon_;
  if (!field_.space_independent()) tabulate();
}

double LeviSeries::first_factor(int level, double s, const Point& y, const SymMat& a_sy) const {
  if (level >= 0) return tabulated(level, s, y);
  const double t = target_.t;
  if (field_.time_independent())
    return gaussian_density(spd_factors(SymMat(2.0 * (t - s) * a_sy)), Point(target_.x - y));
  return FrozenKernel(slice(field_, y)).phi(t, target_.x, s, y);
}

template <class Visit>
void LeviSeries::visit_nodes(double tau, const Point& xi, Visit&& visit) const {
  const double t = target_.t;
  const double dt = t - tau;
  if (dt <= 0.0) return;
  const Point& x = target_.x;
  const int d = dim_;
  const Rule1D time_rule = gauss_legendre(config_.time_nodes, 0.0, 1.0);
  const Rule1D& space_rule = gauss_legendre(config_.space_nodes_per_dim);
  const std::size_t ny = space_rule.size();
  std::size_t y_count = 1;
  for (int k = 0; k < d; ++k) y_count *= ny;

  const bool t_indep = field_.time_independent();
  const SymMat a_xi_fixed = field_(tau, xi);
  const SymMat a_x_fixed = field_(tau, x);

  Point y(d);
  for (std::size_t iu = 0; iu < time_rule.size(); ++iu) {
    const double u = time_rule.nodes[iu];
    const double s = tau + dt * u * u;
    const double ds = 2.0 * dt * u * time_rule.weights[iu];
    const SymMat a_sxi = t_indep ? a_xi_fixed : field_(s, xi);
    const SymMat a_sx = t_indep ? a_x_fixed : field_(s, x);
    const SpdFactors<double> kf = spd_factors(frozen_covariance(field_, xi, tau, s, &a_sxi));

    // Window centred on the product of the two Gaussian factors.
    const double v1 = 2.0 * a_sx.trace() / d * (t - s);
    const double v2 = 2.0 * a_sxi.trace() / d * (s - tau);
    const Point centre = (v2 * x + v1 * xi) / (v1 + v2);
    const double half = config_.truncation_multiplier * std::sqrt(v1 * v2 / (v1 + v2));

    for (std::size_t flat = 0; flat < y_count; ++flat) {
      std::size_t rem = flat;
      double wy = ds;
      for (int k = 0; k < d; ++k) {
        const std::size_t i = rem % ny;
        rem /= ny;
        y(k) = centre(k) + half * space_rule.nodes[i];
        wy *= half * space_rule.weights[i];
      }
      const SymMat a_sy = field_(s, y);
      const SymMat diff = a_sy - a_sxi;
      if (max_abs(diff) == 0.0) continue;
      const SymMat h = gaussian_hessian(kf, Point(y - xi));
      visit(s, y, a_sy, wy * diff.cwiseProduct(h).sum());
    }
  }
}

double LeviSeries::integrate(int level, double tau, const Point& xi) const {
  double total = 0.0;
  visit_nodes(tau, xi, [&](double s, const Point& y, const SymMat& a_sy, double wk) {
    total += wk * first_factor(level, s, y, a_sy);
  });
  return total;
}

bool LeviSeries::locate(double s, const Point& y, Location& loc) const {
  const double dt = target_.t - s;
  if (dt <= 0.0) return false;
  const double u = std::sqrt(dt / horizon_);
  if (u > 1.0 + 1e-12) return false;
  const double sq = std::sqrt(dt);
  const int n_u = config_.grid.tau_nodes;
  const std::size_t n_z = z_axis_.size();

  const double pos_u = std::min(u, 1.0) * n_u;
  const std::size_t iu = std::min<std::size_t>(static_cast<std::size_t>(pos_u), n_u - 1);
  loc.fu = pos_u - static_cast<double>(iu);
  std::size_t flat = 0;
  for (int k = 0; k < dim_; ++k) {
    const double z = (y(k) - target_.x(k)) / sq;
    if (std::abs(z) > z_half_) return false;
    const double pos = (z + z_half_) / (2.0 * z_half_) * static_cast<double>(n_z - 1);
    const std::size_t iz = std::min<std::size_t>(static_cast<std::size_t>(pos), n_z - 2);
    loc.fz[k] = pos - static_cast<double>(iz);
    flat = flat * n_z + iz;
  }
  loc.base = iu * z_count_ + flat;
  loc.scale = dim_ == 1 ? 1.0 / sq : dim_ == 2 ? 1.0 / dt : 1.0 / (dt * sq);
  return true;
}

double LeviSeries::interpolate(int k, const Location& loc) const {
  const auto& g = levels_[k];
  if (dim_ == 1) {
    const double* p = g.data() + loc.base;
    const double* q = p + z_count_;
    const double fz = loc.fz[0];
    return loc.scale * ((1.0 - loc.fu) * ((1.0 - fz) * p[0] + fz * p[1]) +
                        loc.fu * ((1.0 - fz) * q[0] + fz * q[1]));
  }
  const std::size_t n_z = z_axis_.size();
  double acc = 0.0;
  for (int corner = 0; corner < (1 << (dim_ + 1)); ++corner) {
    const int bu = corner & 1;
    double w = bu ? loc.fu : 1.0 - loc.fu;
    std::size_t offset = bu ? z_count_ : 0;
    std::size_t stride = 1;
    for (int kk = dim_ - 1; kk >= 0; --kk) {
      const int b = (corner >> (kk + 1)) & 1;
      w *= b ? loc.fz[kk] : 1.0 - loc.fz[kk];
      offset += b * stride;
      stride *= n_z;
    }
    if (w != 0.0) acc += w * g[loc.base + offset];
  }
  return acc * loc.scale;
}

double LeviSeries::tabulated(int k, double s, const Point& y) const {
  Location loc;
  return locate(s, y, loc) ? interpolate(k, loc) : 0.0;
}

void LeviSeries::tabulate() {
  const int n_u = config_.grid.tau_nodes;
  const std::size_t n_z = z_axis_.size();
  const std::size_t points = static_cast<std::size_t>(n_u) * z_count_;
  std::size_t nodes_per_point = config_.time_nodes;
  for (int k = 0; k < dim_; ++k) nodes_per_point *= config_.space_nodes_per_dim;
  // Reuse nodes across levels when the cache stays below ~400 MB.
  const bool cached = points * nodes_per_point <= 8'000'000;
  std::vector<std::vector<CachedNode>> cache(cached ? points : 0);
  const long long n_points = static_cast<long long>(points);

  for (int k = 0; k < config_.K_max; ++k) {
    std::vector<double> g((n_u + 1) * z_count_, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
    for (long long flat = 0; flat < n_points; ++flat) {
      const std::size_t p = static_cast<std::size_t>(flat);
      const std::size_t j = p / z_count_ + 1;
      const double dt = horizon_ * u_nodes_[j] * u_nodes_[j];
      double value = 0.0;
      if (cached && k > 0) {
        for (const CachedNode& node : cache[p]) value += node.wk * interpolate(k - 1, node.loc);
      } else {
        const double tau = target_.t - dt;
        Point xi = target_.x;
        std::size_t rem = p % z_count_;
        const double sq = std::sqrt(dt);
        for (int kk = dim_ - 1; kk >= 0; --kk) {
          xi(kk) += sq * z_axis_[rem % n_z];
          rem /= n_z;
        }
        if (!cached) {
          value = integrate(k - 1, tau, xi);
        } else {
          visit_nodes(tau, xi, [&](double s, const Point& y, const SymMat& a_sy, double wk) {
            value += wk * first_factor(-1, s, y, a_sy);
            CachedNode node{wk, {}};
            if (locate(s, y, node.loc)) cache[p].push_back(node);
          });
        }
      }
      g[p + z_count_] = value * std::pow(dt, 0.5 * dim_);
    }
    double norm = 0.0;
    for (double v : g) norm = std::max(norm, std::abs(v));
    levels_.push_back(std::move(g));
    if (!trace_.term_norms.empty() && trace_.term_norms.back() > 0.0) {
      const double r = norm / trace_.term_norms.back();
      trace_.ratios.push_back(r);
      trace_.max_ratio = std::max(trace_.max_ratio, r);
    }
    trace_.term_norms.push_back(norm);
    if (norm <= config_.series_tol) break;
  }
}

double LeviSeries::term(int k, double tau, const Point& xi) const {
  return k == 0 ? w0(tau, xi) : iterate(k - 1, tau, xi);
}

double LeviSeries::frozen(double tau, const Point& xi) const {
  const double t = target_.t;
  if (t < tau) return 0.0;
  if (field_.time_independent())
    return gaussian_density(spd_factors(frozen_covariance(field_, xi, tau, t)), Point(target_.x - xi));
  return FrozenKernel(slice(field_, xi)).phi(t, target_.x, tau, xi);
}

double LeviSeries::gamma(double tau, const Point& xi) const {
  const double dt = target_.t - tau;
  if (dt < 0.0) return 0.0;
  if (dt < kMinTimeGap) throw ConfigError("parametrix: t - tau below 1e-12");
  if (dt > horizon_ * (1.0 + 1e-12)) throw GuardRailError("parametrix: source outside the tabulated horizon");
  // One pass over the quadrature nodes accumulates every level.
  double value = frozen(tau, xi);
  if (levels() == 0) return value;
  const int tabs = levels() - 1;
  visit_nodes(tau, xi, [&](double s, const Point& y, const SymMat& a_sy, double wk) {
    double f = first_factor(-1, s, y, a_sy);
    Location loc;
    if (tabs > 0 && locate(s, y, loc))
      for (int k = 0; k < tabs; ++k) f += interpolate(k, loc);
    value += wk * f;
  });
  return value;
}

// ---------------------------------------------------------------------------

namespace {

std::string field_signature(const CoefficientField& field) {
  std::ostringstream os;
  os << field.traits().family << ";d=" << field.dim() << ";lambda=" << format_double(field.lambda())
     << ";Lambda=" << format_double(field.Lambda());
  return os.str();
}

}  // namespace

ShortTimeBuild build_short_time(const CoefficientField& field,
                                const std::vector<SpaceTimePoint>& targets,
                                const std::vector<SpaceTimePoint>& sources,
                                const ParametrixConfig& config) {
  config.validate();
  for (const auto& p : targets)
    if (p.x.size() != field.dim()) throw ConfigError("build_short_time: target dimension mismatch");
  for (const auto& p : sources)
    if (p.x.size() != field.dim()) throw ConfigError("build_short_time: source dimension mismatch");

  ShortTimeBuild out;
  out.grid.targets = targets;
  out.grid.sources = sources;
  out.grid.values = Eigen::MatrixXd::Zero(targets.size(), sources.size());
  out.grid.method = KernelMethod::parametrix;
  out.grid.config_digest = digest(config.canonical() + "|" + field_signature(field));

  const double limit = config.delta0 * config.delta0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    double horizon = 0.0;
    for (const auto& src : sources) {
      const double dt = targets[i].t - src.t;
      if (dt < 0.0) continue;
      if (dt < kMinTimeGap) throw ConfigError("build_short_time: t - tau below 1e-12");
      horizon = std::max(horizon, dt);
    }
    if (horizon == 0.0) continue;
    if (horizon > limit * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "build_short_time: horizon exceeded (t - tau = " << horizon << " > delta0^2 = " << limit
         << "); compose shorter steps";
      throw GuardRailError(os.str());
    }
    LeviSeries series(field, targets[i], horizon, config);
    const SeriesTrace& tr = series.trace();
    if (tr.max_ratio > config.eps0 + config.contraction_slack) {
      std::ostringstream os;
      os << "build_short_time: contraction witness violated (max term ratio " << tr.max_ratio
         << " > eps0 + slack = " << config.eps0 + config.contraction_slack << "; horizon " << horizon
         << ", delta0 " << config.delta0 << "): delta0 too large or quadrature too coarse";
      throw GuardRailError(os.str());
    }
    for (std::size_t j = 0; j < sources.size(); ++j)
      out.grid.values(i, j) = series.gamma(sources[j].t, sources[j].x);
    out.traces.push_back(tr);
  }
  enforce_causality(out.grid);
  return out;
}

double delta0(const ModulusProfile& profile, const BoundConstants& constants) {
  if (profile.radii.empty()) throw ConfigError("delta0: empty profile");
  const bool vanishing =
      std::all_of(profile.values.begin(), profile.values.end(), [](double v) { return v == 0.0; });
  if (vanishing) return std::numeric_limits<double>::infinity();
  const DiniResult full = dini_integral(profile, profile.radii.back());
  if (full.diverged)
    throw GuardRailError("delta0: modulus is not Dini (" + full.diagnostic + "); no admissible delta0");

  const double factor = 2.0 * constants.C0_prime * constants.C1 * constants.C2;
  auto lhs = [&](double r) { return factor * dini_integral(profile, r).value; };
  const auto& radii = profile.radii;
  if (lhs(radii.back()) <= constants.eps0) return radii.back();

  // Bisection over the ladder for the last admissible tabulated radius.
  std::size_t lo = 0;
  std::size_t hi = radii.size() - 1;
  double a = 0.0;
  double b = radii.front();
  if (lhs(radii.front()) <= constants.eps0) {
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (lhs(radii[mid]) <= constants.eps0 ? lo : hi) = mid;
    }
    a = radii[lo];
    b = radii[hi];
  }
  // Refine inside the bracketing segment.
  for (int iter = 0; iter < 200 && b - a > 1e-15 * b; ++iter) {
    const double mid = 0.5 * (a + b);
    (lhs(mid) <= constants.eps0 ? a : b) = mid;
  }
  return a;
}

KernelGrid frozen_grid(const CoefficientField& field, const std::vector<SpaceTimePoint>& targets,
                       const std::vector<SpaceTimePoint>& sources) {
  KernelGrid grid;
  grid.targets = targets;
  grid.sources = sources;
  grid.values = Eigen::MatrixXd::Zero(targets.size(), sources.size());
  grid.method = KernelMethod::frozen;
  grid.config_digest = digest("frozen|" + field_signature(field));
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (sources[j].x.size() != field.dim()) throw ConfigError("frozen_grid: dimension mismatch");
    const FrozenKernel kernel(slice(field, sources[j].x));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].t <= sources[j].t) continue;
      if (field.time_independent()) {
        const SymMat cov = 2.0 * (targets[i].t - sources[j].t) * field(sources[j].t, sources[j].x);
        grid.values(i, j) = gaussian_density(spd_factors(cov), Point(targets[i].x - sources[j].x));
      } else {
        grid.values(i, j) = kernel.phi(targets[i].t, targets[i].x, sources[j].t, sources[j].x);
      }
    }
  }
  return grid;
}

KernelEvaluator frozen_evaluator(const CoefficientField& field) {
  return [field](const std::vector<SpaceTimePoint>& targets, const std::vector<SpaceTimePoint>& sources) {
    return frozen_grid(field, targets, sources);
  };
}

KernelEvaluator parametrix_evaluator(const CoefficientField& field, const ParametrixConfig& config) {
  return [field, config](const std::vector<SpaceTimePoint>& targets,
                         const std::vector<SpaceTimePoint>& sources) {
    return build_short_time(field, targets, sources, config).grid;
  };
}

CompositionResult extend_semigroup(const KernelEvaluator& short_kernel,
                                   const std::vector<SpaceTimePoint>& targets,
                                   const std::vector<SpaceTimePoint>& sources, double total_span,
                                   double step, const CompositionGrid& composition, double delta0,
                                   bool time_homogeneous, double max_leakage) {
  if (!(step > 0.0)) throw ConfigError("extend_semigroup: step must be positive");
  if (step > delta0 * delta0 * (1.0 + 1e-12))
    throw GuardRailError("extend_semigroup: step exceeds delta0^2");
  const double ratio = total_span / step;
  const long m = std::lround(ratio);
  if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio)
    throw ConfigError("extend_semigroup: total_span must be an integer multiple of step");
  if (targets.empty() || sources.empty()) throw ConfigError("extend_semigroup: empty targets or sources");
  const double t = targets.front().t;
  const double s = sources.front().t;
  for (const auto& p : targets)
    if (p.t != t) throw ConfigError("extend_semigroup: targets must share one time");
  for (const auto& p : sources)
    if (p.t != s) throw ConfigError("extend_semigroup: sources must share one time");
  if (std::abs((t - s) - total_span) > 1e-9 * total_span)
    throw ConfigError("extend_semigroup: t - s must equal total_span");

  CompositionResult out;
  if (m == 1) {
    out.grid = short_kernel(targets, sources);
    return out;
  }

  const int d = targets.front().dim();
  Point centre = composition.centre.size() == d ? composition.centre : Point(Point::Zero(d));
  const auto eta_at = [&](double time) {
    return tensor_points({time}, centre, composition.half_width, composition.nodes_per_dim);
  };
  const double h = 2.0 * composition.half_width / (composition.nodes_per_dim - 1);
  const double cell = std::pow(h, d);

  // Row factor Gamma(t, x, t_{m-1}, eta), then fold in the middle steps.
  const auto level_time = [&](long j) { return s + static_cast<double>(j) * step; };
  Eigen::MatrixXd row = short_kernel(targets, eta_at(level_time(m - 1))).values * cell;
  auto record_mass = [&](const Eigen::MatrixXd& r) {
    const double drift = (r.rowwise().sum().array() - 1.0).abs().maxCoeff();
    out.mass_drift.push_back(drift);
    if (drift > max_leakage) {
      std::ostringstream os;
      os << "extend_semigroup: composition grid too narrow (mass leakage " << drift << ")";
      throw GuardRailError(os.str());
    }
  };
  record_mass(row);
  Eigen::MatrixXd middle;
  for (long j = m - 1; j >= 2; --j) {
    if (!time_homogeneous || middle.size() == 0)
      middle = short_kernel(eta_at(level_time(j)), eta_at(level_time(j - 1))).values * cell;
    row = row * middle;
    record_mass(row);
  }
  const Eigen::MatrixXd column = short_kernel(eta_at(level_time(1)), sources).values;
  out.grid.targets = targets;
  out.grid.sources = sources;
  out.grid.values = row * column;
  out.grid.method = KernelMethod::composed;
  std::ostringstream os;
  os << "composed;m=" << m << ";step=" << format_double(step) << ";half_width="
     << format_double(composition.half_width) << ";nodes=" << composition.nodes_per_dim;
  out.grid.config_digest = digest(os.str());
  return out;
}

}  // namespace levi
