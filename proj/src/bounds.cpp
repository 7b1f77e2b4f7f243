#include "levi/bounds.hpp"

#include "levi/frozen_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace levi {

double parabolic_distance(const SpaceTimePoint& X, const SpaceTimePoint& Y) {
  if (X.x.size() != Y.x.size()) throw ConfigError("parabolic_distance: dimension mismatch");
  return std::max((X.x - Y.x).norm(), std::sqrt(std::abs(X.t - Y.t)));
}

double GaussianEnvelope::log_shape(double dt, double r) const {
  return -0.5 * d * std::log(dt) - kappa * std::pow(r / std::sqrt(dt), p);
}

double GaussianEnvelope::operator()(double dt, double r) const {
  return C * std::exp(log_shape(dt, r));
}

namespace {

// |v| / exp(log_env), robust when both factors under- or overflow.
double log_ratio(double v, double log_env) {
  if (v == 0.0) return 0.0;
  return std::exp(std::log(std::abs(v)) - log_env);
}

bool on_target_edge(const KernelGrid& kernel, std::size_t i) {
  const int d = kernel.dim();
  for (int k = 0; k < d; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : kernel.targets) {
      lo = std::min(lo, p.x(k));
      hi = std::max(hi, p.x(k));
    }
    if (hi > lo) {
      const double v = kernel.targets[i].x(k);
      if (v == lo || v == hi) return true;
    }
  }
  return false;
}

WindowReport window_constant(const KernelGrid& grid, double R0, double power) {
  if (!(R0 > 0.0)) throw ConfigError("bound check: R0 must be positive");
  WindowReport rep;
  for (std::size_t i = 0; i < grid.targets.size(); ++i)
    for (std::size_t j = 0; j < grid.sources.size(); ++j) {
      if (!(grid.targets[i].t > grid.sources[j].t)) continue;
      const double v = grid.values(i, j);
      if (!std::isfinite(v)) continue;
      const double r = parabolic_distance(grid.targets[i], grid.sources[j]);
      if (!(r > 0.0 && r < R0)) continue;
      ++rep.evaluated;
      const double c = std::abs(v) * std::pow(r, power);
      if (c > rep.constant) {
        rep.constant = c;
        rep.argmax_target = i;
        rep.argmax_source = j;
      }
    }
  if (rep.evaluated == 0) throw ConfigError("bound check: no grid points inside the window");
  return rep;
}

KernelGrid empty_like(const std::vector<SpaceTimePoint>& targets,
                      const std::vector<SpaceTimePoint>& sources, KernelMethod method) {
  KernelGrid g;
  g.targets = targets;
  g.sources = sources;
  g.values = Eigen::MatrixXd::Zero(targets.size(), sources.size());
  g.method = method;
  return g;
}

}  // namespace

EnvelopeReport envelope_ratio(const KernelGrid& kernel, const GaussianEnvelope& env) {
  EnvelopeReport rep;
  for (std::size_t i = 0; i < kernel.targets.size(); ++i)
    for (std::size_t j = 0; j < kernel.sources.size(); ++j) {
      const double dt = kernel.targets[i].t - kernel.sources[j].t;
      if (!(dt > 0.0)) continue;
      const double r = (kernel.targets[i].x - kernel.sources[j].x).norm();
      const double q = log_ratio(kernel.values(i, j), env.log_shape(dt, r));
      ++rep.evaluated;
      if (q > rep.sup_ratio) {
        rep.sup_ratio = q;
        rep.argmax_target = i;
        rep.argmax_source = j;
      }
    }
  if (rep.evaluated > 0) rep.boundary_flag = on_target_edge(kernel, rep.argmax_target);
  return rep;
}

void write_envelope_csv(std::ostream& out, const KernelGrid& kernel, const GaussianEnvelope& env) {
  const int d = kernel.dim();
  out << "t";
  for (int k = 1; k <= d; ++k) out << ",x" << k;
  out << ",tau";
  for (int k = 1; k <= d; ++k) out << ",xi" << k;
  out << ",ratio\n";
  for (std::size_t i = 0; i < kernel.targets.size(); ++i)
    for (std::size_t j = 0; j < kernel.sources.size(); ++j) {
      const auto& T = kernel.targets[i];
      const auto& S = kernel.sources[j];
      const double dt = T.t - S.t;
      if (!(dt > 0.0)) continue;
      out << format_double(T.t);
      for (int k = 0; k < d; ++k) out << ',' << format_double(T.x(k));
      out << ',' << format_double(S.t);
      for (int k = 0; k < d; ++k) out << ',' << format_double(S.x(k));
      out << ',' << format_double(log_ratio(kernel.values(i, j), env.log_shape(dt, (T.x - S.x).norm())))
          << '\n';
    }
}

WindowReport pointwise_bound_check(const KernelGrid& kernel, double R0) {
  return window_constant(kernel, R0, kernel.dim());
}

DerivativeReport derivative_bound_check(const DerivativeGrids& grids, double R0) {
  if (!grids.gradient || !grids.hessian || !grids.time)
    throw ConfigError("derivative_bound_check: missing derivative grids");
  const int d = grids.gradient->dim();
  DerivativeReport rep;
  rep.gradient = window_constant(*grids.gradient, R0, d + 1);
  rep.hessian = window_constant(*grids.hessian, R0, d + 2);
  rep.time = window_constant(*grids.time, R0, d + 2);
  if (grids.hessian->values.rows() != grids.time->values.rows() ||
      grids.hessian->values.cols() != grids.time->values.cols())
    throw ConfigError("derivative_bound_check: grids do not share points");
  KernelGrid sum = *grids.hessian;
  sum.values = grids.hessian->values.cwiseAbs() + grids.time->values.cwiseAbs();
  rep.second = window_constant(sum, R0, d + 2);
  return rep;
}

DerivativeGrids frozen_derivative_grids(const CoefficientField& field,
                                        const std::vector<SpaceTimePoint>& targets,
                                        const std::vector<SpaceTimePoint>& sources) {
  KernelGrid g = empty_like(targets, sources, KernelMethod::frozen);
  KernelGrid h = g;
  KernelGrid tt = g;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const auto& S = sources[j];
    if (S.x.size() != field.dim()) throw ConfigError("frozen_derivative_grids: dimension mismatch");
    const FrozenKernel kernel(slice(field, S.x));
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& T = targets[i];
      if (!(T.t > S.t)) continue;
      const SpdFactors<double> f = kernel.factors(S.t, T.t);
      const Point z = T.x - S.x;
      const SymMat hess = gaussian_hessian(f, z);
      g.values(i, j) = gaussian_gradient(f, z).norm();
      h.values(i, j) = hess.norm();
      // The covariance grows at rate 2 A(t, xi), so d_t Phi = A(t, xi) : D^2 Phi.
      tt.values(i, j) = std::abs(field(T.t, S.x).cwiseProduct(hess).sum());
    }
  }
  return {g, h, tt};
}

DerivativeGrids fd_derivative_grids(const KernelEvaluator& kernel,
                                    const std::vector<SpaceTimePoint>& targets,
                                    const std::vector<SpaceTimePoint>& sources, double hx, double ht) {
  if (!(hx > 0.0 && ht > 0.0)) throw ConfigError("fd_derivative_grids: steps must be positive");
  if (targets.empty()) throw ConfigError("fd_derivative_grids: no targets");
  const int d = targets.front().dim();
  // Stencil per target: centre, +-e_k, +-e_k +-e_l (k < l), +-t.
  std::vector<Point> offsets{Point::Zero(d)};
  for (int k = 0; k < d; ++k) {
    offsets.push_back(Point(hx * Point::Unit(d, k)));
    offsets.push_back(Point(-hx * Point::Unit(d, k)));
  }
  for (int k = 0; k < d; ++k)
    for (int l = k + 1; l < d; ++l)
      for (int sk : {1, -1})
        for (int sl : {1, -1})
          offsets.push_back(Point(hx * (sk * Point::Unit(d, k) + sl * Point::Unit(d, l))));
  const std::size_t n_space = offsets.size();
  std::vector<SpaceTimePoint> shifted;
  for (const auto& T : targets) {
    for (const auto& o : offsets) shifted.push_back({T.t, Point(T.x + o)});
    shifted.push_back({T.t + ht, T.x});
    shifted.push_back({T.t - ht, T.x});
  }
  const std::size_t stride = n_space + 2;
  const KernelGrid all = kernel(shifted, sources);

  KernelGrid g = empty_like(targets, sources, all.method);
  KernelGrid h = g;
  KernelGrid tt = g;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t base = i * stride;
    for (std::size_t j = 0; j < sources.size(); ++j) {
      if (!(targets[i].t - ht > sources[j].t)) {
        g.values(i, j) = h.values(i, j) = tt.values(i, j) = nan;
        continue;
      }
      auto v = [&](std::size_t k) { return all.values(base + k, j); };
      const double c = v(0);
      Point grad(d);
      SymMat hess(d, d);
      for (int k = 0; k < d; ++k) {
        grad(k) = (v(1 + 2 * k) - v(2 + 2 * k)) / (2.0 * hx);
        hess(k, k) = (v(1 + 2 * k) - 2.0 * c + v(2 + 2 * k)) / (hx * hx);
      }
      std::size_t m = 1 + 2 * d;
      for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l) {
          const double pp = v(m), pm = v(m + 1), mp = v(m + 2), mm = v(m + 3);
          m += 4;
          hess(k, l) = hess(l, k) = (pp - pm - mp + mm) / (4.0 * hx * hx);
        }
      g.values(i, j) = grad.norm();
      h.values(i, j) = hess.norm();
      tt.values(i, j) = std::abs(v(n_space) - v(n_space + 1)) / (2.0 * ht);
    }
  }
  return {g, h, tt};
}

// ---------------------------------------------------------------------------

namespace {

// log(2 d m (3 n xi + 1/kappa0) / e) without forming the product.
double log_volume_factor(int d, double m, double n, double xi, double kappa0) {
  const double big = 3.0 * n * xi;
  return std::log(2.0 * d) + std::log(m) - 1.0 + std::log(big) + std::log1p(1.0 / (kappa0 * big));
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// max(A, B) + beta |xi|^{2 - delta}, with N replaced by its upper bound.
double crossover_margin(const ChainingBound& c, double xi) {
  const double u = std::pow(xi, 1.0 - c.delta) + 1.0;
  const double m = u * u - 1.0;
  const double lead = -c.kappa0 * std::pow(xi, 2.0 - c.delta);
  const double common = std::log(c.C0) * u * u + c.d * std::log(u);
  const double a = lead + common + c.d * m * std::log(4.0 * u * xi);
  const double b = lead - std::log(c.kappa0 * xi) + common +
                   c.d * m * log_volume_factor(c.d, m, u, xi, c.kappa0);
  return std::max(a, b) + c.beta * std::pow(xi, 2.0 - c.delta);
}

}  // namespace

double ChainingBound::log_single(double xi) const { return std::log(C0) - kappa0 * xi; }

double ChainingBound::log_chained(double xi) const {
  if (!(xi > 0.0)) return log_single(0.0);
  const double n = std::ceil(std::pow(xi, 1.0 - delta));
  const double m = n * n - 1.0;
  const double common = -kappa0 * n * xi + n * n * std::log(C0) + d * std::log(n);
  const double t1 = common + (m > 0.0 ? d * m * std::log(4.0 * n * xi) : 0.0);
  const double t2 = std::log(c0 * std::sqrt(static_cast<double>(d))) - std::log(kappa0 * xi) + common +
                    (m > 0.0 ? d * m * log_volume_factor(d, m, n, xi, kappa0)
                             : 0.0);
  return log_sum_exp(t1, t2);
}

double ChainingBound::operator()(double t, const Point& x) const {
  if (!(t > 0.0)) throw ConfigError("chaining_bound: requires t > 0");
  const double xi = x.norm() / std::sqrt(t);
  const double body = xi > R0 ? log_chained(xi) : log_single(xi);
  return std::exp(-0.5 * d * std::log(t) + body);
}

ChainingBound make_chaining_bound(double C0, double kappa0, double delta, int d, double c0,
                                  double beta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("chaining_bound: delta must be in (0, 1)");
  if (!(C0 > 0.0 && kappa0 > 0.0)) throw ConfigError("chaining_bound: C0 and kappa0 must be positive");
  if (d < 1) throw ConfigError("chaining_bound: dimension must be positive");
  ChainingBound c{C0, kappa0, delta, d, c0, 1.0, beta > 0.0 ? beta : 0.5 * kappa0};

  // Log scan for the last |xi| where either condition fails, then bisection.
  const double lo_exp = 0.0;
  const double hi_exp = 150.0;
  const int per_decade = 40;
  const int n = static_cast<int>((hi_exp - lo_exp) * per_decade);
  int last_bad = -1;
  for (int k = 0; k <= n; ++k) {
    const double xi = std::pow(10.0, lo_exp + static_cast<double>(k) / per_decade);
    if (crossover_margin(c, xi) > 0.0) last_bad = k;
  }
  if (last_bad == n) throw GuardRailError("chaining_bound: crossover beyond 1e150");
  if (last_bad >= 0) {
    double a = std::pow(10.0, lo_exp + static_cast<double>(last_bad) / per_decade);
    double b = std::pow(10.0, lo_exp + static_cast<double>(last_bad + 1) / per_decade);
    for (int iter = 0; iter < 200 && b - a > 1e-14 * b; ++iter) {
      const double mid = 0.5 * (a + b);
      (crossover_margin(c, mid) > 0.0 ? a : b) = mid;
    }
    c.R0 = std::max(1.0, b);
  }
  return c;
}

double chaining_bound(double C0, double kappa0, double delta, double t, const Point& x) {
  return make_chaining_bound(C0, kappa0, delta, static_cast<int>(x.size()))(t, x);
}

SeamReport seam_report(const ChainingBound& bound) {
  SeamReport rep;
  rep.R0 = bound.R0;
  rep.log_single = bound.log_single(bound.R0);
  rep.log_chained = bound.log_chained(std::nextafter(bound.R0, std::numeric_limits<double>::infinity()));
  rep.jump_factor = std::exp(rep.log_chained - rep.log_single);
  return rep;
}

double log_tail_sum_bound(int k, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("tail_sum_bound: alpha must be positive");
  if (k < 0) throw ConfigError("tail_sum_bound: k must be nonnegative");
  return std::lgamma(k + 1.0) - std::log(alpha) + k * std::log(3.0 + 1.0 / alpha);
}

double tail_sum_bound(int k, double alpha) { return std::exp(log_tail_sum_bound(k, alpha)); }

double tail_sum_direct(int k, double alpha, long terms) {
  if (!(alpha > 0.0)) throw ConfigError("tail_sum_direct: alpha must be positive");
  double acc = -std::numeric_limits<double>::infinity();
  for (long n = 2; n < terms + 2; ++n)
    acc = log_sum_exp(acc, k * std::log(n + 1.0) - alpha * (n - 1.0));
  return std::exp(acc);
}

// ---------------------------------------------------------------------------

namespace {

template <class Visit>
void for_each_exp_ratio(const KernelGrid& kernel, double C0, double kappa0, Visit visit) {
  const int d = kernel.dim();
  for (std::size_t i = 0; i < kernel.targets.size(); ++i)
    for (std::size_t j = 0; j < kernel.sources.size(); ++j) {
      const double dt = kernel.targets[i].t - kernel.sources[j].t;
      if (!(dt > 0.0)) continue;
      if (dt > 1.0 + 1e-12) throw ConfigError("exp_decay_check: requires t - tau <= 1");
      const double eps = std::sqrt(dt);
      const double r = (kernel.targets[i].x - kernel.sources[j].x).norm();
      const double log_env = std::log(C0) - d * std::log(eps) - kappa0 * r / eps;
      visit(i, j, log_ratio(kernel.values(i, j), log_env));
    }
}

}  // namespace

ExpDecayReport exp_decay_check(const KernelGrid& kernel, double C0, double kappa0) {
  if (!(C0 > 0.0 && kappa0 > 0.0)) throw ConfigError("exp_decay_check: C0 and kappa0 must be positive");
  ExpDecayReport rep;
  for_each_exp_ratio(kernel, C0, kappa0, [&](std::size_t i, std::size_t j, double q) {
    ++rep.checked;
    rep.worst_ratio = std::max(rep.worst_ratio, q);
    if (q > 1.0 + 1e-12) {
      ++rep.violations;
      rep.violating.emplace_back(i, j);
    }
  });
  return rep;
}

double fit_exp_envelope(const KernelGrid& kernel, double kappa0) {
  double sup = 0.0;
  for_each_exp_ratio(kernel, 1.0, kappa0,
                     [&](std::size_t, std::size_t, double q) { sup = std::max(sup, q); });
  return sup;
}

// ---------------------------------------------------------------------------

KeyValues to_key_values(const EnvelopeReport& r) {
  return {{"sup_ratio", format_double(r.sup_ratio)},
          {"argmax_target", std::to_string(r.argmax_target)},
          {"argmax_source", std::to_string(r.argmax_source)},
          {"boundary_flag", r.boundary_flag ? "true" : "false"},
          {"evaluated", std::to_string(r.evaluated)}};
}

KeyValues to_key_values(const WindowReport& r, const std::string& prefix) {
  return {{prefix + "constant", format_double(r.constant)},
          {prefix + "argmax_target", std::to_string(r.argmax_target)},
          {prefix + "argmax_source", std::to_string(r.argmax_source)},
          {prefix + "evaluated", std::to_string(r.evaluated)}};
}

KeyValues to_key_values(const DerivativeReport& r) {
  KeyValues kv;
  for (const auto& [name, w] : {std::pair<const char*, const WindowReport*>{"gradient.", &r.gradient},
                                {"second.", &r.second},
                                {"hessian.", &r.hessian},
                                {"time.", &r.time}})
    kv.merge(to_key_values(*w, name));
  return kv;
}

KeyValues to_key_values(const SeamReport& r) {
  return {{"R0", format_double(r.R0)},
          {"log_single", format_double(r.log_single)},
          {"log_chained", format_double(r.log_chained)},
          {"jump_factor", format_double(r.jump_factor)}};
}

KeyValues to_key_values(const ExpDecayReport& r) {
  return {{"violations", std::to_string(r.violations)},
          {"worst_ratio", format_double(r.worst_ratio)},
          {"checked", std::to_string(r.checked)}};
}

}  // namespace levi
