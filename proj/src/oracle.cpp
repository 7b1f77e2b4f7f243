#include "levi/oracle.hpp"

#include "levi/bounds.hpp"
#include "levi/quadrature.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>

namespace levi {

void FDGridSpec::validate() const {
  if (nodes_per_dim < 16) throw ConfigError("FDGridSpec: nodes per dim must be >= 16");
  if (!(dt > 0.0)) throw ConfigError("FDGridSpec: time step must be positive");
  if (!(theta >= 0.5 && theta <= 1.0)) throw ConfigError("FDGridSpec: theta must be in [1/2, 1]");
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

// Uniform box with nodes lo + h i, i = 0..n-1; unknowns on interior nodes.
struct Box {
  int d = 1;
  int n = 0;
  double h = 0.0;
  Point lo;

  int m() const { return n - 2; }
  std::size_t unknowns() const {
    std::size_t c = 1;
    for (int k = 0; k < d; ++k) c *= static_cast<std::size_t>(m());
    return c;
  }
  double cell() const { return std::pow(h, d); }
  // Interior multi-index (0-based over interior nodes) of a flat index.
  void split(std::size_t flat, int* idx) const {
    for (int k = d - 1; k >= 0; --k) {
      idx[k] = static_cast<int>(flat % m());
      flat /= m();
    }
  }
  long flat_of(const int* idx) const {
    long f = 0;
    for (int k = 0; k < d; ++k) {
      if (idx[k] < 0 || idx[k] >= m()) return -1;
      f = f * m() + idx[k];
    }
    return f;
  }
  Point node(const int* idx) const {
    Point x(d);
    for (int k = 0; k < d; ++k) x(k) = lo(k) + h * (idx[k] + 1);
    return x;
  }
  bool contains(const Point& x) const {
    for (int k = 0; k < d; ++k)
      if (x(k) < lo(k) || x(k) > lo(k) + h * (n - 1)) return false;
    return true;
  }
};

Box make_box(const Point& centre, double half_width, int n) {
  Box b;
  b.d = static_cast<int>(centre.size());
  b.n = n;
  b.h = 2.0 * half_width / (n - 1);
  b.lo = centre.array() - half_width;
  return b;
}

// Discrete a^ij D_ij on interior nodes with zero Dirichlet data.
SpMat assemble_operator(const CoefficientField& field, const Box& box, double time) {
  const int d = box.d;
  const double h2 = box.h * box.h;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(box.unknowns() * (1 + 2 * d + 2 * d * (d - 1)));
  int idx[kMaxDim];
  int nb[kMaxDim];
  for (std::size_t p = 0; p < box.unknowns(); ++p) {
    box.split(p, idx);
    const SymMat a = field(time, box.node(idx));
    double diag = 0.0;
    for (int k = 0; k < d; ++k) {
      diag -= 2.0 * a(k, k) / h2;
      for (int sgn : {1, -1}) {
        std::copy(idx, idx + d, nb);
        nb[k] += sgn;
        const long q = box.flat_of(nb);
        if (q >= 0) trip.emplace_back(static_cast<int>(p), static_cast<int>(q), a(k, k) / h2);
      }
    }
    for (int k = 0; k < d; ++k)
      for (int l = k + 1; l < d; ++l) {
        if (a(k, l) == 0.0) continue;
        for (int sk : {1, -1})
          for (int sl : {1, -1}) {
            std::copy(idx, idx + d, nb);
            nb[k] += sk;
            nb[l] += sl;
            const long q = box.flat_of(nb);
            if (q >= 0)
              trip.emplace_back(static_cast<int>(p), static_cast<int>(q), 2.0 * a(k, l) * sk * sl / (4.0 * h2));
          }
      }
    trip.emplace_back(static_cast<int>(p), static_cast<int>(p), diag);
  }
  SpMat L(box.unknowns(), box.unknowns());
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

// Normalised indicator of B_eps(centre) on the interior nodes; falls back to
// the nearest node when the ball contains none.
Vec ball_weights(const Box& box, const Point& centre, double eps) {
  Vec g = Vec::Zero(box.unknowns());
  int idx[kMaxDim];
  std::size_t count = 0;
  for (std::size_t p = 0; p < box.unknowns(); ++p) {
    box.split(p, idx);
    if ((box.node(idx) - centre).norm() <= eps) {
      g(p) = 1.0;
      ++count;
    }
  }
  if (count == 0) {
    for (int k = 0; k < box.d; ++k)
      idx[k] = std::clamp(static_cast<int>(std::lround((centre(k) - box.lo(k)) / box.h)) - 1, 0, box.m() - 1);
    g(box.flat_of(idx)) = 1.0;
    count = 1;
  }
  return g / (static_cast<double>(count) * box.cell());
}

double interpolate(const Box& box, const Vec& u, const Point& x) {
  if (!box.contains(x)) return 0.0;
  const int d = box.d;
  int base[kMaxDim];
  double frac[kMaxDim];
  for (int k = 0; k < d; ++k) {
    const double pos = (x(k) - box.lo(k)) / box.h;
    base[k] = std::clamp(static_cast<int>(std::floor(pos)), 0, box.n - 2);
    frac[k] = pos - base[k];
  }
  double acc = 0.0;
  int idx[kMaxDim];
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      const int b = (corner >> k) & 1;
      w *= b ? frac[k] : 1.0 - frac[k];
      idx[k] = base[k] + b - 1;  // full-grid index -> interior index
    }
    if (w == 0.0) continue;
    const long q = box.flat_of(idx);
    if (q >= 0) acc += w * u(q);
  }
  return acc;
}

struct MarchSetup {
  const CoefficientField* field;
  Box box;
  bool adjoint = false;
  double start = 0.0;     // physical start time
  int direction = 1;      // +1 forward, -1 backward in physical time
  double dt = 0.0;
  double theta = 1.0;
  // Source active for physical times in (src_a, src_b); spatial weights g.
  double src_a = 0.0, src_b = 0.0;
  Vec g;
  Vec u0;
};

struct MarchOut {
  std::vector<Vec> snapshots;  // at the requested march distances
  std::vector<std::pair<double, double>> mass_trace;
  std::size_t steps = 0;
  double max_edge_ratio = 0.0;
};

class StepSolver {
 public:
  StepSolver(const MarchSetup& setup) : s_(setup) {}

  const SpMat& op(double time) {
    if (s_.field->time_independent()) {
      if (cached_op_.size() == 0) cached_op_ = build(time);
      return cached_op_;
    }
    if (time != op_time_ || scratch_.size() == 0) {
      scratch_ = build(time);
      op_time_ = time;
    }
    return scratch_;
  }

  Vec solve(const SpMat& L, double step, const Vec& rhs, const Vec& guess) {
    const bool reuse = s_.field->time_independent() && step == last_step_ && has_factor_;
    if (!reuse) {
      SpMat M(L.rows(), L.cols());
      M.setIdentity();
      M -= s_.theta * step * L;
      M.makeCompressed();
      if (s_.box.d == 1) {
        lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
        lu_->compute(M);
        if (lu_->info() != Eigen::Success) throw VerificationError("FD oracle: factorisation failed");
      } else {
        it_ = std::make_unique<Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>>>();
        it_->setTolerance(1e-10);
        it_->setMaxIterations(2000);
        it_->compute(M);
      }
      last_step_ = step;
      has_factor_ = true;
    }
    if (s_.box.d == 1) return lu_->solve(rhs);
    Vec x = it_->solveWithGuess(rhs, guess);
    if (it_->info() != Eigen::Success) throw VerificationError("FD oracle: BiCGSTAB did not converge");
    return x;
  }

 private:
  SpMat build(double time) {
    SpMat L = assemble_operator(*s_.field, s_.box, time);
    if (s_.adjoint) return SpMat(L.transpose());
    return L;
  }

  const MarchSetup& s_;
  SpMat cached_op_;
  SpMat scratch_;
  double op_time_ = std::numeric_limits<double>::quiet_NaN();
  double last_step_ = -1.0;
  bool has_factor_ = false;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  std::unique_ptr<Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>>> it_;
};

double edge_ratio(const Box& box, const Vec& u) {
  const double peak = u.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0.0;
  int idx[kMaxDim];
  double edge = 0.0;
  for (std::size_t p = 0; p < box.unknowns(); ++p) {
    box.split(p, idx);
    for (int k = 0; k < box.d; ++k)
      if (idx[k] == 0 || idx[k] == box.m() - 1) {
        edge = std::max(edge, std::abs(u(p)));
        break;
      }
  }
  return edge / peak;
}

// Marches to each distance in `stops` (sorted increasing, physical time
// start + direction * stop) and stores the solution there.
MarchOut march(const MarchSetup& s, const std::vector<double>& stops) {
  MarchOut out;
  StepSolver solver(s);
  Vec u = s.u0.size() ? s.u0 : Vec::Zero(s.box.unknowns());
  const double src_len = s.src_b - s.src_a;
  double sigma = 0.0;
  for (double stop : stops) {
    while (sigma < stop - 1e-14 * std::max(1.0, stop)) {
      const double step = std::min(s.dt, stop - sigma);
      const double t0 = s.start + s.direction * sigma;
      const double t1 = s.start + s.direction * (sigma + step);
      Vec rhs = u;
      if (s.theta < 1.0) {
        const SpMat& L0 = solver.op(t0);
        rhs += (1.0 - s.theta) * step * (L0 * u);
      }
      if (src_len > 0.0) {
        const double lo = std::max(std::min(t0, t1), s.src_a);
        const double hi = std::min(std::max(t0, t1), s.src_b);
        if (hi > lo) rhs += ((hi - lo) / src_len) * s.g;
      }
      const SpMat& L1 = solver.op(t1);
      u = solver.solve(L1, step, rhs, u);
      sigma += step;
      ++out.steps;
      out.mass_trace.emplace_back(t1, u.sum() * s.box.cell());
    }
    sigma = stop;
    out.snapshots.push_back(u);
    out.max_edge_ratio = std::max(out.max_edge_ratio, edge_ratio(s.box, u));
  }
  return out;
}

void check_margin(const Box& box, const Point& p, double horizon, double half_width) {
  for (int k = 0; k < box.d; ++k) {
    const double centre = box.lo(k) + half_width;
    if (std::abs(p(k) - centre) + 4.0 * std::sqrt(horizon) > half_width) {
      std::ostringstream os;
      os << "FD oracle: point within 4 sqrt(horizon) of the box boundary (half-width " << half_width
         << ", horizon " << horizon << "); mass would leak";
      throw GuardRailError(os.str());
    }
  }
}

// Shared driver for the forward and adjoint solves.
FDResult solve_eps(const CoefficientField& field, const SpaceTimePoint& P, double eps,
                   const FDGridSpec& spec, double horizon, const std::vector<SpaceTimePoint>& points,
                   bool adjoint) {
  spec.validate();
  if (!(eps > 0.0)) throw ConfigError("FD oracle: eps must be positive");
  if (!(horizon > 0.0)) throw ConfigError("FD oracle: horizon must be positive");
  if (!(eps * eps < horizon)) throw ConfigError("FD oracle: requires eps^2 < horizon");
  const int d = field.dim();
  if (d > 2) throw ConfigError("FD oracle: supports d = 1, 2");
  if (P.x.size() != d) throw ConfigError("FD oracle: dimension mismatch");
  for (const auto& q : points)
    if (q.x.size() != d) throw ConfigError("FD oracle: dimension mismatch");

  const Point centre = spec.centre.size() == d ? spec.centre : P.x;
  const double half = spec.half_width > 0.0 ? spec.half_width : 8.0 * std::sqrt(field.Lambda() * horizon);
  MarchSetup s;
  s.field = &field;
  s.box = make_box(centre, half, spec.nodes_per_dim);
  check_margin(s.box, P.x, horizon, half);
  s.adjoint = adjoint;
  s.direction = adjoint ? -1 : 1;
  s.dt = spec.dt;
  s.theta = spec.theta;
  const Vec g = ball_weights(s.box, P.x, eps);
  const double e2 = eps * eps;
  if (spec.initial_delta) {
    s.start = P.t;
    s.u0 = g;
  } else {
    s.start = adjoint ? P.t + e2 : P.t - e2;
    s.src_a = adjoint ? P.t : P.t - e2;
    s.src_b = adjoint ? P.t + e2 : P.t;
    s.g = g;
  }

  // March distances for the requested points; others stay zero.
  std::map<double, std::size_t> stop_index;
  for (const auto& q : points) {
    const double dist = s.direction * (q.t - s.start);
    if (dist <= 0.0) continue;
    if (std::abs(q.t - P.t) > horizon * (1.0 + 1e-9) + e2)
      throw ConfigError("FD oracle: requested time beyond the horizon");
    stop_index.emplace(dist, 0);
  }
  std::vector<double> stops;
  for (auto& [dist, i] : stop_index) {
    i = stops.size();
    stops.push_back(dist);
  }
  const MarchOut run = march(s, stops);

  FDResult res;
  res.grid.targets = adjoint ? std::vector<SpaceTimePoint>{P} : points;
  res.grid.sources = adjoint ? points : std::vector<SpaceTimePoint>{P};
  res.grid.method = KernelMethod::fd_oracle;
  res.grid.values = adjoint ? Eigen::MatrixXd::Zero(1, points.size()) : Eigen::MatrixXd::Zero(points.size(), 1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double dist = s.direction * (points[i].t - s.start);
    if (dist <= 0.0) continue;
    const double v = interpolate(s.box, run.snapshots[stop_index.at(dist)], points[i].x);
    (adjoint ? res.grid.values(0, i) : res.grid.values(i, 0)) = v;
  }
  res.mass_trace = run.mass_trace;
  res.diagnostics["steps"] = std::to_string(run.steps);
  res.diagnostics["half_width"] = format_double(half);
  res.diagnostics["h"] = format_double(s.box.h);
  res.diagnostics["dt"] = format_double(spec.dt);
  res.diagnostics["theta"] = format_double(spec.theta);
  res.diagnostics["max_edge_ratio"] = format_double(run.max_edge_ratio);
  res.diagnostics["final_mass"] = format_double(run.mass_trace.empty() ? 0.0 : run.mass_trace.back().second);
  res.diagnostics["source"] = spec.initial_delta ? "initial_delta" : "mollified";
  std::ostringstream os;
  os << (adjoint ? "adjoint" : "forward") << ";eps=" << format_double(eps) << ";n=" << spec.nodes_per_dim
     << ";dt=" << format_double(spec.dt) << ";theta=" << format_double(spec.theta)
     << ";half=" << format_double(half) << ";family=" << field.traits().family;
  res.grid.config_digest = digest(os.str());
  return res;
}

}  // namespace

FDResult gamma_eps(const CoefficientField& field, const SpaceTimePoint& Y, double eps,
                   const FDGridSpec& spec, double horizon, const std::vector<SpaceTimePoint>& targets) {
  return solve_eps(field, Y, eps, spec, horizon, targets, false);
}

FDResult adjoint_eps(const CoefficientField& field, const SpaceTimePoint& X, double eps,
                     const FDGridSpec& spec, double horizon, const std::vector<SpaceTimePoint>& points) {
  return solve_eps(field, X, eps, spec, horizon, points, true);
}

KernelGrid gamma_eps_grid(const CoefficientField& field, const std::vector<SpaceTimePoint>& targets,
                          const std::vector<SpaceTimePoint>& sources, double eps,
                          const FDGridSpec& spec) {
  KernelGrid grid;
  grid.targets = targets;
  grid.sources = sources;
  grid.values = Eigen::MatrixXd::Zero(targets.size(), sources.size());
  grid.method = KernelMethod::fd_oracle;
  if (targets.empty() || sources.empty()) return grid;
  double t_max = -std::numeric_limits<double>::infinity();
  double s_min = std::numeric_limits<double>::infinity();
  for (const auto& p : targets) t_max = std::max(t_max, p.t);
  for (const auto& p : sources) s_min = std::min(s_min, p.t);
  const double horizon = t_max - s_min;
  if (!(horizon > 0.0)) return grid;

  std::vector<std::exception_ptr> errors(sources.size());
  std::vector<std::string> digests(sources.size());
  const long n = static_cast<long>(sources.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long j = 0; j < n; ++j) {
    try {
      const FDResult r = gamma_eps(field, sources[j], eps, spec, horizon, targets);
      grid.values.col(j) = r.grid.values.col(0);
      digests[j] = r.grid.config_digest;
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  grid.config_digest = digests.front();
  enforce_causality(grid);
  return grid;
}

KernelEvaluator fd_evaluator(const CoefficientField& field, double eps, const FDGridSpec& spec) {
  return [field, eps, spec](const std::vector<SpaceTimePoint>& targets,
                            const std::vector<SpaceTimePoint>& sources) {
    return gamma_eps_grid(field, targets, sources, eps, spec);
  };
}

}  // namespace levi

// ---------------------------------------------------------------------------

namespace levi {

namespace {

// Trapezoid weights for points forming a tensor grid (possibly non-uniform).
std::vector<double> tensor_trapezoid(const std::vector<const Point*>& pts, Point* lo, Point* hi) {
  const int d = static_cast<int>(pts.front()->size());
  std::vector<std::vector<double>> axes(d);
  for (int k = 0; k < d; ++k) {
    for (const Point* p : pts) axes[k].push_back((*p)(k));
    std::sort(axes[k].begin(), axes[k].end());
    axes[k].erase(std::unique(axes[k].begin(), axes[k].end()), axes[k].end());
  }
  std::size_t expected = 1;
  for (const auto& a : axes) expected *= a.size();
  if (expected != pts.size()) throw ConfigError("quadrature: source slice is not a tensor grid");
  for (const auto& a : axes)
    if (a.size() < 2) throw ConfigError("quadrature: source slice needs two nodes per axis");
  if (lo && hi) {
    lo->resize(d);
    hi->resize(d);
    for (int k = 0; k < d; ++k) {
      (*lo)(k) = axes[k].front();
      (*hi)(k) = axes[k].back();
    }
  }
  std::vector<double> w;
  w.reserve(pts.size());
  for (const Point* p : pts) {
    double wt = 1.0;
    for (int k = 0; k < d; ++k) {
      const auto& a = axes[k];
      const std::size_t i = std::lower_bound(a.begin(), a.end(), (*p)(k)) - a.begin();
      const double left = i > 0 ? a[i] - a[i - 1] : 0.0;
      const double right = i + 1 < a.size() ? a[i + 1] - a[i] : 0.0;
      wt *= 0.5 * (left + right);
    }
    w.push_back(wt);
  }
  return w;
}

double box_gaussian_mass(const Point& x, const Point& lo, const Point& hi, double sd) {
  double m = 1.0;
  for (int k = 0; k < x.size(); ++k)
    m *= 0.5 * (std::erf((hi(k) - x(k)) / (sd * std::numbers::sqrt2)) -
                std::erf((lo(k) - x(k)) / (sd * std::numbers::sqrt2)));
  return m;
}

CKReport compare_composition(const Eigen::MatrixXd& a, const Eigen::VectorXd& w,
                             const Eigen::MatrixXd& b, const Eigen::MatrixXd& direct) {
  const Eigen::MatrixXd composed = a * w.asDiagonal() * b;
  CKReport rep;
  const double peak = direct.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < direct.rows(); ++i)
    for (Eigen::Index j = 0; j < direct.cols(); ++j) {
      const double ref = direct(i, j);
      if (!(ref >= 1e-3 * peak) || ref <= 0.0) continue;
      ++rep.compared;
      rep.max_rel_defect = std::max(rep.max_rel_defect, std::abs(composed(i, j) - ref) / ref);
    }
  return rep;
}

bool same_point(const SpaceTimePoint& p, const SpaceTimePoint& q) {
  if (p.x.size() != q.x.size()) return false;
  const double scale = 1.0 + std::abs(p.t) + p.x.cwiseAbs().maxCoeff();
  return std::abs(p.t - q.t) <= 1e-12 * scale && (p.x - q.x).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

MassReport mass_check(const KernelGrid& kernel, double Lambda, double min_coverage) {
  std::map<double, std::vector<std::size_t>> slices;
  for (std::size_t j = 0; j < kernel.sources.size(); ++j) slices[kernel.sources[j].t].push_back(j);
  MassReport rep;
  for (const auto& [tau, cols] : slices) {
    std::vector<const Point*> pts;
    for (std::size_t j : cols) pts.push_back(&kernel.sources[j].x);
    Point lo, hi;
    const std::vector<double> w = tensor_trapezoid(pts, &lo, &hi);
    for (std::size_t i = 0; i < kernel.targets.size(); ++i) {
      const double dt = kernel.targets[i].t - tau;
      if (!(dt > 0.0)) continue;
      const double cov = box_gaussian_mass(kernel.targets[i].x, lo, hi, std::sqrt(2.0 * Lambda * dt));
      rep.min_coverage = std::min(rep.min_coverage, cov);
      if (cov < min_coverage) {
        std::ostringstream os;
        os << "mass_check: source grid covers only " << cov << " of the Gaussian envelope mass at target "
           << i << ", tau = " << tau;
        throw VerificationError(os.str());
      }
      double m = 0.0;
      for (std::size_t c = 0; c < cols.size(); ++c) m += w[c] * kernel.values(i, cols[c]);
      rep.entries.push_back({i, tau, m});
      rep.max_deviation = std::max(rep.max_deviation, std::abs(m - 1.0));
    }
  }
  return rep;
}

CKReport ck_check(const KernelGrid& A, const KernelGrid& B, const KernelGrid& direct, double tau_mid) {
  if (A.sources.size() != B.targets.size()) throw ConfigError("ck_check: grid mismatch at tau_mid");
  for (std::size_t k = 0; k < A.sources.size(); ++k) {
    if (std::abs(A.sources[k].t - tau_mid) > 1e-12 * (1.0 + std::abs(tau_mid)))
      throw ConfigError("ck_check: A's sources are not at tau_mid");
    if (!same_point(A.sources[k], B.targets[k])) throw ConfigError("ck_check: grid mismatch at tau_mid");
  }
  if (direct.targets.size() != A.targets.size() || direct.sources.size() != B.sources.size())
    throw ConfigError("ck_check: direct grid does not match A's targets and B's sources");
  std::vector<const Point*> pts;
  for (const auto& p : A.sources) pts.push_back(&p.x);
  const std::vector<double> w = tensor_trapezoid(pts, nullptr, nullptr);
  return compare_composition(A.values, Eigen::Map<const Eigen::VectorXd>(w.data(), w.size()), B.values,
                             direct.values);
}

CKReport ck_check(const KernelEvaluator& kernel, const std::vector<SpaceTimePoint>& targets,
                  const std::vector<SpaceTimePoint>& sources, double tau_mid, const Point& centre,
                  double half_width, int nodes_per_dim) {
  const int d = static_cast<int>(centre.size());
  const Rule1D rule = gauss_legendre(nodes_per_dim, -half_width, half_width);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= rule.size();
  std::vector<SpaceTimePoint> mid;
  Eigen::VectorXd w(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Point eta = centre;
    double wt = 1.0;
    for (int k = d - 1; k >= 0; --k) {
      const std::size_t i = rem % rule.size();
      rem /= rule.size();
      eta(k) += rule.nodes[i];
      wt *= rule.weights[i];
    }
    mid.push_back({tau_mid, eta});
    w(flat) = wt;
  }
  return compare_composition(kernel(targets, mid).values, w, kernel(mid, sources).values,
                             kernel(targets, sources).values);
}

ResidualReport residual_check(const KernelGrid& kernel, const CoefficientField& field,
                              double exclusion_radius, double flag_tolerance) {
  const int d = kernel.dim();
  if (d != field.dim()) throw ConfigError("residual_check: dimension mismatch");
  const int axes = d + 1;
  std::vector<std::vector<double>> coords(axes);
  for (const auto& p : kernel.targets) {
    coords[0].push_back(p.t);
    for (int k = 0; k < d; ++k) coords[k + 1].push_back(p.x(k));
  }
  std::vector<double> origin(axes), step(axes);
  std::vector<long> count(axes);
  for (int a = 0; a < axes; ++a) {
    auto& c = coords[a];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    if (c.size() < 5) throw ConfigError("residual_check: stencil underflow (fewer than 5 nodes per axis)");
    origin[a] = c.front();
    step[a] = (c.back() - c.front()) / static_cast<double>(c.size() - 1);
    count[a] = static_cast<long>(c.size());
  }
  auto flat_of = [&](const std::vector<long>& idx) {
    long f = 0;
    for (int a = 0; a < axes; ++a) {
      if (idx[a] < 0 || idx[a] >= count[a]) return -1L;
      f = f * count[a] + idx[a];
    }
    return f;
  };
  long total = 1;
  for (long c : count) total *= c;
  std::vector<long> lookup(total, -1);
  std::vector<std::vector<long>> index_of(kernel.targets.size(), std::vector<long>(axes));
  for (std::size_t i = 0; i < kernel.targets.size(); ++i) {
    const auto& p = kernel.targets[i];
    for (int a = 0; a < axes; ++a) {
      const double v = a == 0 ? p.t : p.x(a - 1);
      index_of[i][a] = std::lround((v - origin[a]) / step[a]);
    }
    lookup[flat_of(index_of[i])] = static_cast<long>(i);
  }

  ResidualReport rep;
  for (std::size_t j = 0; j < kernel.sources.size(); ++j) {
    const auto& Y = kernel.sources[j];
    for (std::size_t i = 0; i < kernel.targets.size(); ++i) {
      const auto& X = kernel.targets[i];
      if (!(X.t - step[0] > Y.t)) continue;
      const double r = parabolic_distance(X, Y);
      if (r < exclusion_radius) continue;
      auto at = [&](int axis_a, int sa, int axis_b, int sb, double* out) {
        std::vector<long> idx = index_of[i];
        if (axis_a >= 0) idx[axis_a] += sa;
        if (axis_b >= 0) idx[axis_b] += sb;
        const long f = flat_of(idx);
        if (f < 0 || lookup[f] < 0) return false;
        *out = kernel.values(lookup[f], j);
        return true;
      };
      double c, tp, tm;
      if (!at(-1, 0, -1, 0, &c) || !at(0, 1, -1, 0, &tp) || !at(0, -1, -1, 0, &tm)) continue;
      const SymMat a = field(X.t, X.x);
      double res = (tp - tm) / (2.0 * step[0]);
      bool ok = true;
      for (int k = 1; k <= d && ok; ++k) {
        double p, m;
        ok = at(k, 1, -1, 0, &p) && at(k, -1, -1, 0, &m);
        if (ok) res -= a(k - 1, k - 1) * (p - 2.0 * c + m) / (step[k] * step[k]);
      }
      for (int k = 1; k <= d && ok; ++k)
        for (int l = k + 1; l <= d && ok; ++l) {
          double pp, pm, mp, mm;
          ok = at(k, 1, l, 1, &pp) && at(k, 1, l, -1, &pm) && at(k, -1, l, 1, &mp) && at(k, -1, l, -1, &mm);
          if (ok) res -= 2.0 * a(k - 1, l - 1) * (pp - pm - mp + mm) / (4.0 * step[k] * step[l]);
        }
      if (!ok) continue;
      ++rep.evaluated;
      rep.max_scaled = std::max(rep.max_scaled, std::abs(res) * std::pow(r, d + 2));
    }
  }
  if (rep.evaluated == 0) throw ConfigError("residual_check: stencil underflow (no admissible interior points)");
  rep.flagged = rep.max_scaled > flag_tolerance;
  return rep;
}

SymmetryReport adjoint_solve_and_symmetry(const CoefficientField& field, const SpaceTimePoint& X,
                                          double eps, const FDGridSpec& spec,
                                          const std::vector<SpaceTimePoint>& sources) {
  if (sources.empty()) throw ConfigError("symmetry: no sources");
  double horizon = 0.0;
  for (const auto& y : sources) {
    if (!(y.t < X.t)) throw ConfigError("symmetry: sources must precede the target time");
    horizon = std::max(horizon, X.t - y.t);
  }
  SymmetryReport rep;
  const FDResult adj = adjoint_eps(field, X, eps, spec, horizon, sources);
  rep.adjoint.assign(adj.grid.values.data(), adj.grid.values.data() + sources.size());
  rep.forward.resize(sources.size());
  std::vector<std::exception_ptr> errors(sources.size());
  const long n = static_cast<long>(sources.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < n; ++k) {
    try {
      rep.forward[k] = gamma_eps(field, sources[k], eps, spec, horizon, {X}).grid.values(0, 0);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  const double peak = *std::max_element(rep.forward.begin(), rep.forward.end());
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (!(rep.forward[k] >= 1e-3 * peak) || rep.forward[k] <= 0.0) continue;
    ++rep.compared;
    rep.max_rel_gap = std::max(rep.max_rel_gap, std::abs(rep.forward[k] - rep.adjoint[k]) / rep.forward[k]);
  }
  return rep;
}

KeyValues to_key_values(const MassReport& r) {
  return {{"max_deviation", format_double(r.max_deviation)},
          {"min_coverage", format_double(r.min_coverage)},
          {"entries", std::to_string(r.entries.size())}};
}

KeyValues to_key_values(const CKReport& r) {
  return {{"max_rel_defect", format_double(r.max_rel_defect)}, {"compared", std::to_string(r.compared)}};
}

KeyValues to_key_values(const ResidualReport& r) {
  return {{"max_scaled", format_double(r.max_scaled)},
          {"evaluated", std::to_string(r.evaluated)},
          {"flagged", r.flagged ? "true" : "false"}};
}

KeyValues to_key_values(const SymmetryReport& r) {
  return {{"max_rel_gap", format_double(r.max_rel_gap)}, {"compared", std::to_string(r.compared)}};
}

}  // namespace levi
