#include "levi/commands.hpp"

#include "levi/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace levi {

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config;
  if (dynamic_cast<const GuardRailError*>(&e)) return ExitCode::guard_rail;
  if (dynamic_cast<const VerificationError*>(&e)) return ExitCode::verification;
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::io;
  return ExitCode::unexpected;
}

namespace {

namespace fs = std::filesystem;

fs::path output_dir(const RunManifest& m, const CommandOptions& opt) {
  fs::path dir = !opt.out_dir.empty() ? fs::path(opt.out_dir)
                 : !m.output_dir.empty() ? fs::path(m.base_dir) / m.output_dir
                                         : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  std::ofstream out(dir / name);
  if (!out) throw IoError("cannot write " + (dir / name).string());
  return out;
}

void write_kv_file(const fs::path& dir, const std::string& name, const KeyValues& kv) {
  auto out = open_out(dir, name);
  write_key_values(out, kv);
  if (!out) throw IoError("write failed for " + (dir / name).string());
}

void write_manifest_copy(const fs::path& dir, const RunManifest& m) {
  auto out = open_out(dir, "manifest.yaml");
  out << serialize_manifest(m);
}

YAML::Node section(const YAML::Node& params, const std::string& key) {
  if (params && params.IsMap() && params[key]) return params[key];
  return YAML::Node(YAML::NodeType::Map);
}

ProbeSpec probe_spec(const RunManifest& m, int d) {
  const YAML::Node p = section(m.params, "probes");
  const std::string where = "params.probes";
  check_keys(p, {"t_min", "t_max", "center", "half_width", "count", "directions"}, where);
  ProbeSpec s = default_probes(d);
  s.t_min = param_double(p, "t_min", s.t_min, where);
  s.t_max = param_double(p, "t_max", s.t_max, where);
  s.half_width = param_double(p, "half_width", s.half_width, where);
  s.count = param_int(p, "count", s.count, where);
  s.directions = param_int(p, "directions", s.directions, where);
  const auto c = param_list(p, "center", std::vector<double>(d, 0.0), where);
  if (static_cast<int>(c.size()) != d) throw ConfigError(where + ".center: dimension mismatch");
  s.center = Eigen::Map<const Eigen::VectorXd>(c.data(), d);
  s.start_index = 1 + m.seed;
  return s;
}

std::vector<double> dyadic_ladder(const RunManifest& m) {
  const YAML::Node p = section(m.params, "dyadic");
  check_keys(p, {"k_min", "k_max"}, "params.dyadic");
  const int k_min = param_int(p, "k_min", 0, "params.dyadic");
  const int k_max = param_int(p, "k_max", 14, "params.dyadic");
  if (k_max < k_min) throw ConfigError("params.dyadic.k_max: must be >= k_min");
  return dyadic_radii(k_min, k_max);
}

std::vector<SpaceTimePoint> grid_points(const YAML::Node& node, const std::string& where, int d) {
  check_keys(node, {"times", "centre", "half_width", "nodes"}, where);
  const auto times = param_list(node, "times", {}, where);
  if (times.empty()) throw ConfigError(where + ".times: required");
  const auto c = param_list(node, "centre", std::vector<double>(d, 0.0), where);
  if (static_cast<int>(c.size()) != d) throw ConfigError(where + ".centre: dimension mismatch");
  const double half = param_double(node, "half_width", 0.0, where);
  const int nodes = param_int(node, "nodes", 1, where);
  if (nodes < 1 || half < 0.0) throw ConfigError(where + ": nodes must be >= 1 and half_width >= 0");
  if (nodes == 1) {
    std::vector<SpaceTimePoint> pts;
    for (double t : times) pts.push_back({t, Eigen::Map<const Eigen::VectorXd>(c.data(), d)});
    return pts;
  }
  return tensor_points(times, Eigen::Map<const Eigen::VectorXd>(c.data(), d), half, nodes);
}

void kernel_points(const RunManifest& m, int d, std::vector<SpaceTimePoint>& targets,
                   std::vector<SpaceTimePoint>& sources) {
  const YAML::Node g = section(m.params, "grid");
  check_keys(g, {"targets", "sources"}, "params.grid");
  targets = grid_points(section(g, "targets"), "params.grid.targets", d);
  sources = grid_points(section(g, "sources"), "params.grid.sources", d);
}

double local_exponent(const ModulusProfile& p, std::size_t i) {
  return std::log(p.values[i + 1] / p.values[i]) / std::log(p.radii[i + 1] / p.radii[i]);
}

}  // namespace

std::string classify_modulus(const CoefficientField& field, const ModulusProfile& rho,
                             const ModulusProfile& omega) {
  const bool flat = std::all_of(rho.values.begin(), rho.values.end(), [](double v) { return v == 0.0; });
  if (field.space_independent() || flat) return "constant-in-x; Dini trivially";
  const DiniResult dr = dini_integral(rho, rho.radii.back());
  if (dr.diverged) {
    const DiniResult dw = dini_integral(omega, omega.radii.back());
    return dw.diverged ? "non-Dini" : "DMO_x (not Dini continuous)";
  }
  // Exponent over the three smallest radii.
  if (rho.radii.size() >= 4 && rho.values.front() > 0.0) {
    const double e = std::min({local_exponent(rho, 0), local_exponent(rho, 1), local_exponent(rho, 2)});
    if (e >= 0.95) return "Dini (Lipschitz)";
    if (e > 0.05) {
      std::ostringstream os;
      os.precision(2);
      os << std::fixed << "Dini (Holder, alpha ~ " << e << ")";
      return os.str();
    }
  }
  return "Dini";
}

void cmd_dmo(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params, {"probes", "dyadic", "oscillation"}, "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const ProbeSpec probes = probe_spec(m, field.dim());
  const auto radii = dyadic_ladder(m);
  const YAML::Node q = section(m.params, "oscillation");
  check_keys(q, {"time_nodes", "space_nodes"}, "params.oscillation");
  OscillationQuad quad;
  quad.time_nodes = param_int(q, "time_nodes", quad.time_nodes, "params.oscillation");
  quad.space_nodes = param_int(q, "space_nodes", quad.space_nodes, "params.oscillation");

  const ModulusProfile rho = modulus_continuity(field, radii, probes);
  const ModulusProfile omega = mean_oscillation_profile(field, radii, probes, quad);
  const DiniResult dr = dini_integral(rho, radii.back());
  const DiniResult dw = dini_integral(omega, radii.back());

  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  {
    auto out = open_out(dir, "modulus.csv");
    out << "r,rho,omega\n";
    for (std::size_t i = 0; i < radii.size(); ++i)
      out << format_double(radii[i]) << ',' << format_double(rho.values[i]) << ','
          << format_double(omega.values[i]) << '\n';
  }
  KeyValues kv;
  kv["classification"] = classify_modulus(field, rho, omega);
  kv["dini_rho"] = format_double(dr.value);
  kv["dini_rho_tail"] = format_double(dr.tail);
  kv["rho_diverged"] = dr.diverged ? "true" : "false";
  kv["dini_omega"] = format_double(dw.value);
  kv["dini_omega_tail"] = format_double(dw.tail);
  kv["omega_diverged"] = dw.diverged ? "true" : "false";
  if (!dr.diagnostic.empty()) kv["rho_diagnostic"] = dr.diagnostic;
  if (!dw.diagnostic.empty()) kv["omega_diagnostic"] = dw.diagnostic;
  kv["r_max"] = format_double(radii.back());
  kv["r_min"] = format_double(radii.front());
  kv["sampling"] = rho.sampling_spec;
  write_kv_file(dir, "dini.txt", kv);
}

void cmd_freeze(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params, {"x0", "r", "depth", "window", "time_nodes", "space_nodes", "samples"}, "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const int d = field.dim();
  const auto x0v = param_list(m.params, "x0", std::vector<double>(d, 0.0));
  if (static_cast<int>(x0v.size()) != d) throw ConfigError("params.x0: dimension mismatch");
  const Point x0 = Eigen::Map<const Eigen::VectorXd>(x0v.data(), d);
  FreezeSpec spec;
  const auto window = param_list(m.params, "window", {spec.window_t0, spec.window_t1});
  if (window.size() != 2 || !(window[1] > window[0])) throw ConfigError("params.window: expected [t0, t1] with t0 < t1");
  spec.window_t0 = window[0];
  spec.window_t1 = window[1];
  spec.time_nodes = param_int(m.params, "time_nodes", spec.time_nodes);
  spec.space_nodes = param_int(m.params, "space_nodes", spec.space_nodes);
  const double r = param_double(m.params, "r", 0.5);
  const int depth = param_int(m.params, "depth", 10);
  const int samples = param_int(m.params, "samples", 101);
  if (samples < 2) throw ConfigError("params.samples: must be >= 2");

  const FreezeResult res = freeze(field, x0, r, depth, spec);
  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  {
    auto out = open_out(dir, "frozen_curve.csv");
    out << "t";
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) out << ",a" << i + 1 << j + 1;
    out << '\n';
    for (double t : linspace(spec.window_t0, spec.window_t1, samples)) {
      const SymMat a = res.curve(t);
      out << format_double(t);
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) out << ',' << format_double(a(i, j));
      out << '\n';
    }
  }
  KeyValues kv;
  kv["derivation"] = res.curve.derivation == CurveDerivation::exact_slice ? "exact_slice" : "averaged_limit";
  kv["time_independent"] = res.curve.time_independent ? "true" : "false";
  kv["depth"] = std::to_string(depth);
  kv["r"] = format_double(r);
  for (std::size_t k = 0; k < res.increments.size(); ++k)
    kv["increment." + std::to_string(k)] = format_double(res.increments[k]);
  write_kv_file(dir, "freeze.txt", kv);
}

void cmd_phi(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params, {"grid"}, "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  std::vector<SpaceTimePoint> targets, sources;
  kernel_points(m, field.dim(), targets, sources);
  const KernelGrid grid = frozen_grid(field, targets, sources);
  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  auto out = open_out(dir, "kernel.csv");
  write_kernel_csv(out, grid);
}


namespace {

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string join_point(const Point& p) {
  return join(std::vector<double>(p.data(), p.data() + p.size()));
}

// Fills cfg.delta0 from the modulus of continuity unless it was overridden.
void resolve_delta0(const CoefficientField& field, const RunManifest& m, const BoundConstants& c,
                    ParametrixConfig& cfg, KeyValues& kv) {
  if (cfg.delta0_provenance != Provenance::config_override && !field.space_independent()) {
    const ModulusProfile rho = modulus_continuity(field, dyadic_ladder(m), probe_spec(m, field.dim()));
    cfg.delta0 = delta0(rho, c);
    cfg.delta0_provenance = Provenance::derived_formula;
  }
  kv["delta0"] = format_double(cfg.delta0);
  kv["delta0_provenance"] = to_string(cfg.delta0_provenance);
}

void constants_to(const BoundConstants& c, KeyValues& kv) {
  kv["C0"] = format_double(c.C0);
  kv["kappa0"] = format_double(c.kappa0);
  kv["C0_prime"] = format_double(c.C0_prime);
  kv["kappa0_prime"] = format_double(c.kappa0_prime);
  kv["C1"] = format_double(c.C1);
  kv["C2"] = format_double(c.C2);
  kv["eps0"] = format_double(c.eps0);
  for (const auto& [name, prov] : c.provenance) kv["provenance." + name] = to_string(prov);
}

CompositionGrid composition_grid(const YAML::Node& node, int d) {
  const std::string where = "params.composition";
  check_keys(node, {"centre", "half_width", "nodes"}, where);
  CompositionGrid g;
  const auto c = param_list(node, "centre", std::vector<double>(d, 0.0), where);
  if (static_cast<int>(c.size()) != d) throw ConfigError(where + ".centre: dimension mismatch");
  g.centre = Eigen::Map<const Eigen::VectorXd>(c.data(), d);
  g.half_width = param_double(node, "half_width", g.half_width, where);
  g.nodes_per_dim = param_int(node, "nodes", g.nodes_per_dim, where);
  if (g.nodes_per_dim < 3 || !(g.half_width > 0.0)) throw ConfigError(where + ": needs nodes >= 3 and half_width > 0");
  return g;
}

}  // namespace

void cmd_build(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params, {"grid", "parametrix", "dyadic", "probes", "kappa_ratio", "envelope"}, "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const int d = field.dim();
  std::vector<SpaceTimePoint> targets, sources;
  kernel_points(m, d, targets, sources);
  ParametrixConfig cfg = parametrix_config(section(m.params, "parametrix"));
  const double kappa_ratio = param_double(m.params, "kappa_ratio", 0.5);
  const BoundConstants c = full_bound_constants(field.lambda(), field.Lambda(), kappa_ratio, d, cfg.eps0);

  KeyValues terms;
  constants_to(c, terms);
  KernelGrid grid;
  if (field.space_independent()) {
    grid = frozen_grid(field, targets, sources);
    terms["levels"] = "0";
    terms["note"] = "coefficients independent of x: Gamma equals the frozen kernel";
  } else {
    resolve_delta0(field, m, c, cfg, terms);
    const ShortTimeBuild built = build_short_time(field, targets, sources, cfg);
    grid = built.grid;
    double worst = 0.0;
    for (std::size_t i = 0; i < built.traces.size(); ++i) {
      const SeriesTrace& tr = built.traces[i];
      const std::string key = "trace." + std::to_string(i) + ".";
      terms[key + "target"] = format_double(tr.target.t) + ";" + join_point(tr.target.x);
      terms[key + "horizon"] = format_double(tr.horizon);
      terms[key + "term_norms"] = join(tr.term_norms);
      terms[key + "ratios"] = join(tr.ratios);
      terms[key + "max_ratio"] = format_double(tr.max_ratio);
      worst = std::max(worst, tr.max_ratio);
    }
    terms["max_ratio"] = format_double(worst);
    terms["contraction_limit"] = format_double(cfg.eps0 + cfg.contraction_slack);
  }

  const YAML::Node e = section(m.params, "envelope");
  check_keys(e, {"kappa_factor", "slack"}, "params.envelope");
  const double factor = param_double(e, "kappa_factor", 0.5, "params.envelope");
  const double slack = param_double(e, "slack", 1.2, "params.envelope");
  const GaussianEnvelope env{1.0, factor * c.kappa0, 2.0, d};
  const EnvelopeReport er = envelope_ratio(grid, env);
  KeyValues envelope = to_key_values(er);
  envelope["kappa"] = format_double(env.kappa);
  envelope["reference_bound"] = format_double(c.C0 / (1.0 - cfg.eps0) * slack);
  envelope["within_reference"] = er.sup_ratio <= c.C0 / (1.0 - cfg.eps0) * slack ? "true" : "false";

  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  {
    auto out = open_out(dir, "kernel.csv");
    write_kernel_csv(out, grid);
  }
  write_kv_file(dir, "terms.txt", terms);
  write_kv_file(dir, "envelope.txt", envelope);
}

void cmd_chain(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params,
             {"grid", "parametrix", "dyadic", "probes", "kappa_ratio", "base", "step", "composition",
              "time_homogeneous", "max_leakage"},
             "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const int d = field.dim();
  std::vector<SpaceTimePoint> targets, sources;
  kernel_points(m, d, targets, sources);
  const double span = targets.front().t - sources.front().t;
  const double step = param_double(m.params, "step", span);
  const std::string base = param_string(m.params, "base", field.space_independent() ? "frozen" : "parametrix");

  KeyValues kv;
  KernelEvaluator kernel;
  double limit = std::numeric_limits<double>::infinity();
  if (base == "frozen") {
    if (!field.space_independent() && !opt.force)
      throw GuardRailError("chain: the frozen base is exact only for x-independent fields; pass --force");
    kernel = frozen_evaluator(field);
  } else if (base == "parametrix") {
    ParametrixConfig cfg = parametrix_config(section(m.params, "parametrix"));
    const BoundConstants c = full_bound_constants(field.lambda(), field.Lambda(),
                                                  param_double(m.params, "kappa_ratio", 0.5), d, cfg.eps0);
    resolve_delta0(field, m, c, cfg, kv);
    limit = cfg.delta0;
    kernel = parametrix_evaluator(field, cfg);
  } else {
    throw ConfigError("params.base: expected 'frozen' or 'parametrix'");
  }
  const CompositionResult res =
      extend_semigroup(kernel, targets, sources, span, step, composition_grid(section(m.params, "composition"), d),
                       limit, param_bool(m.params, "time_homogeneous", field.time_independent()),
                       param_double(m.params, "max_leakage", 0.01));
  kv["base"] = base;
  kv["span"] = format_double(span);
  kv["step"] = format_double(step);
  kv["levels"] = std::to_string(std::lround(span / step));
  kv["mass_drift"] = join(res.mass_drift);

  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  {
    auto out = open_out(dir, "kernel.csv");
    write_kernel_csv(out, res.grid);
  }
  write_kv_file(dir, "chain.txt", kv);
}


namespace {

struct CheckOutcome {
  std::string status;  // pass, fail or skipped
  KeyValues metrics;
};

struct VerifyContext {
  const RunManifest& manifest;
  const CoefficientField& field;
  const KernelGrid& kernel;
  const BoundConstants& constants;
  double eps0;
  double eps;
  FDGridSpec spec;
  KernelEvaluator evaluator;  // empty for composed kernels
};

double tolerance(const YAML::Node& node, const std::string& key, double fallback) {
  return param_double(node, key, fallback, "params.tolerances");
}

bool single_time(const std::vector<SpaceTimePoint>& pts) {
  return std::all_of(pts.begin(), pts.end(), [&](const SpaceTimePoint& p) { return p.t == pts.front().t; });
}

Point mean_position(const std::vector<SpaceTimePoint>& pts) {
  Point c = Point::Zero(pts.front().dim());
  for (const auto& p : pts) c += p.x;
  return c / static_cast<double>(pts.size());
}

double spatial_radius(const std::vector<SpaceTimePoint>& pts, const Point& c) {
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p.x - c).norm());
  return r;
}

CheckOutcome run_mass(const VerifyContext& v, double tol) {
  const MassReport r = mass_check(v.kernel, v.field.Lambda());
  CheckOutcome o{r.max_deviation <= tol ? "pass" : "fail", to_key_values(r)};
  return o;
}

CheckOutcome run_ck(const VerifyContext& v, const YAML::Node& node, double tol) {
  const std::string where = "params.ck";
  check_keys(node, {"tau_mid", "half_width", "nodes"}, where);
  const auto& K = v.kernel;
  if (!v.evaluator) throw ConfigError("ck: no pointwise evaluator for a composed kernel");
  if (!single_time(K.targets) || !single_time(K.sources))
    throw ConfigError("ck: needs a single target time and a single source time");
  const double t = K.targets.front().t;
  const double s = K.sources.front().t;
  if (!(t > s)) throw ConfigError("ck: target time must follow the source time");
  const double tau_mid = param_double(node, "tau_mid", 0.5 * (t + s), where);
  if (!(tau_mid > s && tau_mid < t)) throw ConfigError(where + ".tau_mid: must lie strictly between s and t");
  const Point centre = 0.5 * (mean_position(K.targets) + mean_position(K.sources));
  const double extent = std::max(spatial_radius(K.targets, centre), spatial_radius(K.sources, centre));
  const double half = param_double(node, "half_width", extent + 8.0 * std::sqrt(v.field.Lambda() * (t - s)), where);
  const int nodes = param_int(node, "nodes", v.field.dim() == 1 ? 96 : 40, where);
  const CKReport r = ck_check(v.evaluator, K.targets, K.sources, tau_mid, centre, half, nodes);
  KeyValues kv = to_key_values(r);
  kv["tau_mid"] = format_double(tau_mid);
  return {r.max_rel_defect <= tol ? "pass" : "fail", kv};
}

CheckOutcome run_residual(const VerifyContext& v, double radius, double tol) {
  const ResidualReport r = residual_check(v.kernel, v.field, radius, tol);
  KeyValues kv = to_key_values(r);
  kv["exclusion_radius"] = format_double(radius);
  return {r.flagged ? "fail" : "pass", kv};
}

CheckOutcome run_symmetry(const VerifyContext& v, double tol) {
  const auto& K = v.kernel;
  const auto last = std::max_element(K.targets.begin(), K.targets.end(),
                                     [](const SpaceTimePoint& a, const SpaceTimePoint& b) { return a.t < b.t; });
  std::vector<SpaceTimePoint> sources;
  for (const auto& y : K.sources)
    if (y.t < last->t) sources.push_back(y);
  if (sources.empty()) throw ConfigError("symmetry: no source precedes the latest target");
  const SymmetryReport r = adjoint_solve_and_symmetry(v.field, *last, v.eps, v.spec, sources);
  return {r.max_rel_gap <= tol ? "pass" : "fail", to_key_values(r)};
}

CheckOutcome run_oracle(const VerifyContext& v, double tol) {
  const auto& K = v.kernel;
  if (K.method == KernelMethod::fd_oracle) throw ConfigError("oracle: the kernel is itself the oracle");
  const KernelGrid F = gamma_eps_grid(v.field, K.targets, K.sources, v.eps, v.spec);
  double worst = 0.0;
  std::size_t compared = 0;
  for (Eigen::Index j = 0; j < F.values.cols(); ++j) {
    double diff = 0.0, peak = 0.0;
    for (Eigen::Index i = 0; i < F.values.rows(); ++i) {
      if (!(K.targets[i].t > K.sources[j].t)) continue;
      diff = std::max(diff, std::abs(K.values(i, j) - F.values(i, j)));
      peak = std::max(peak, std::abs(F.values(i, j)));
    }
    if (peak > 0.0) {
      worst = std::max(worst, diff / peak);
      ++compared;
    }
  }
  if (compared == 0) throw ConfigError("oracle: no causal source columns");
  KeyValues kv;
  kv["max_rel_gap"] = format_double(worst);
  kv["columns"] = std::to_string(compared);
  kv["eps"] = format_double(v.eps);
  return {worst <= tol ? "pass" : "fail", kv};
}

CheckOutcome run_envelope(const VerifyContext& v, const YAML::Node& node) {
  check_keys(node, {"kappa_factor", "slack"}, "params.envelope");
  const double factor = param_double(node, "kappa_factor", 0.5, "params.envelope");
  const double slack = param_double(node, "slack", 1.2, "params.envelope");
  const GaussianEnvelope env{1.0, factor * v.constants.kappa0, 2.0, v.field.dim()};
  const EnvelopeReport r = envelope_ratio(v.kernel, env);
  const double bound = v.constants.C0 / (1.0 - v.eps0) * slack;
  KeyValues kv = to_key_values(r);
  kv["reference_bound"] = format_double(bound);
  return {r.sup_ratio <= bound ? "pass" : "fail", kv};
}

}  // namespace

void cmd_verify(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params,
             {"kernel", "method", "grid", "checks", "tolerances", "oracle", "eps", "ck", "exclusion_radius",
              "parametrix", "dyadic", "probes", "kappa_ratio", "envelope"},
             "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const int d = field.dim();
  KeyValues kv;

  if (!field.space_independent()) {
    const ModulusProfile rho = modulus_continuity(field, dyadic_ladder(m), probe_spec(m, d));
    const DiniResult dr = dini_integral(rho, rho.radii.back());
    kv["dini_rho"] = format_double(dr.value);
    if (dr.diverged) {
      if (!opt.force)
        throw GuardRailError("verify: modulus of continuity is not Dini; pass --force to run the oracle checks anyway");
      kv["note"] = "non-Dini field under --force: oracle checks only, no bounds claimed";
    }
  }

  ParametrixConfig cfg = parametrix_config(section(m.params, "parametrix"));
  const BoundConstants c = full_bound_constants(field.lambda(), field.Lambda(),
                                                param_double(m.params, "kappa_ratio", 0.5), d, cfg.eps0);
  const FDGridSpec spec = fd_grid_spec(section(m.params, "oracle"));
  const double eps = param_double(m.params, "eps", 0.01);
  if (!(eps > 0.0)) throw ConfigError("params.eps: must be positive");

  KernelGrid kernel;
  if (m.params["kernel"]) {
    const fs::path path = fs::path(m.base_dir) / param_string(m.params, "kernel", "");
    kernel = read_kernel_csv_file(path.string());
    if (kernel.dim() != d) throw ConfigError("params.kernel: dimension does not match the field");
  } else {
    std::vector<SpaceTimePoint> targets, sources;
    kernel_points(m, d, targets, sources);
    const std::string method =
        param_string(m.params, "method", field.space_independent() ? "frozen" : "fd_oracle");
    if (method == "frozen") {
      kernel = frozen_grid(field, targets, sources);
    } else if (method == "fd_oracle") {
      kernel = gamma_eps_grid(field, targets, sources, eps, spec);
    } else if (method == "parametrix") {
      resolve_delta0(field, m, c, cfg, kv);
      kernel = build_short_time(field, targets, sources, cfg).grid;
    } else {
      throw ConfigError("params.method: expected frozen, parametrix or fd_oracle");
    }
  }
  kv["method"] = to_string(kernel.method);

  KernelEvaluator evaluator;
  switch (kernel.method) {
    case KernelMethod::frozen: evaluator = frozen_evaluator(field); break;
    case KernelMethod::fd_oracle: evaluator = fd_evaluator(field, eps, spec); break;
    case KernelMethod::parametrix:
      if (!field.space_independent()) resolve_delta0(field, m, c, cfg, kv);
      evaluator = parametrix_evaluator(field, cfg);
      break;
    case KernelMethod::composed: break;
  }
  const VerifyContext ctx{m, field, kernel, c, cfg.eps0, eps, spec, evaluator};

  const YAML::Node tol = section(m.params, "tolerances");
  check_keys(tol, {"mass", "ck", "residual", "symmetry", "oracle"}, "params.tolerances");
  std::vector<std::string> checks{"mass", "ck", "residual", "envelope", "oracle"};
  if (m.params["checks"]) {
    const YAML::Node list = m.params["checks"];
    if (!list.IsSequence()) throw ConfigError("params.checks: expected a list");
    checks.clear();
    for (const auto& n : list) checks.push_back(n.as<std::string>());
  }

  std::vector<std::string> failed;
  for (const auto& name : checks) {
    CheckOutcome out;
    try {
      if (name == "mass") out = run_mass(ctx, tolerance(tol, "mass", 1e-2));
      else if (name == "ck") out = run_ck(ctx, section(m.params, "ck"), tolerance(tol, "ck", 2e-2));
      else if (name == "residual")
        out = run_residual(ctx, param_double(m.params, "exclusion_radius", 0.3), tolerance(tol, "residual", 1e-2));
      else if (name == "symmetry") out = run_symmetry(ctx, tolerance(tol, "symmetry", 5e-2));
      else if (name == "oracle") out = run_oracle(ctx, tolerance(tol, "oracle", 5e-2));
      else if (name == "envelope") out = run_envelope(ctx, section(m.params, "envelope"));
      else throw std::invalid_argument(name);
    } catch (const std::invalid_argument&) {
      throw ConfigError("params.checks: unknown check '" + name + "'");
    } catch (const VerificationError& e) {
      out = {"fail", {{"error", e.what()}}};
    } catch (const ConfigError& e) {
      out = {"skipped", {{"reason", e.what()}}};
    }
    kv["check." + name + ".status"] = out.status;
    for (const auto& [k, val] : out.metrics) kv["check." + name + "." + k] = val;
    if (out.status == "fail") failed.push_back(name);
  }
  kv["overall"] = failed.empty() ? "pass" : "fail";

  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  write_kv_file(dir, "verify.txt", kv);
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    throw VerificationError("verify: failed checks: " + names);
  }
}


void cmd_bounds(const RunManifest& m, const CommandOptions& opt) {
  check_keys(m.params, {"kappa_ratio", "eps0", "deltas", "xi_max", "xi_points", "beyond_decades", "tail_checks", "kernel"},
             "params");
  const CoefficientField field = make_field(m.field, m.base_dir);
  const int d = field.dim();
  const double eps0 = param_double(m.params, "eps0", 0.5);
  const BoundConstants c =
      full_bound_constants(field.lambda(), field.Lambda(), param_double(m.params, "kappa_ratio", 0.5), d, eps0);
  const auto deltas = param_list(m.params, "deltas", {0.25, 0.5, 0.75});
  for (double delta : deltas)
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("params.deltas: every delta must lie in (0, 1)");
  const double xi_max = param_double(m.params, "xi_max", 50.0);
  const int xi_points = param_int(m.params, "xi_points", 501);
  const double decades = param_double(m.params, "beyond_decades", 3.0);
  if (!(xi_max > 0.0) || xi_points < 2 || !(decades > 0.0))
    throw ConfigError("params: xi_max, xi_points and beyond_decades must be positive");

  KeyValues kv;
  constants_to(c, kv);
  kv["c0"] = format_double(std::exp(1.0));

  const fs::path dir = output_dir(m, opt);
  write_manifest_copy(dir, m);
  auto csv = open_out(dir, "chain.csv");
  csv << "delta,xi,log_bound,branch\n";
  for (double delta : deltas) {
    const ChainingBound b = make_chaining_bound(c.C0, c.kappa0, delta, d);
    const std::string key = "delta." + format_double(delta) + ".";
    for (const auto& [k, v] : to_key_values(seam_report(b))) kv[key + k] = v;
    auto row = [&](double xi) {
      const bool chained = xi >= b.R0;
      const double lb = chained ? b.log_chained(xi) : b.log_single(xi);
      csv << format_double(delta) << ',' << format_double(xi) << ',' << format_double(lb) << ','
          << (chained ? "chained" : "single") << '\n';
      return lb;
    };
    for (double xi : linspace(0.0, xi_max, xi_points)) row(xi);
    bool monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double e : linspace(0.0, decades, 200)) {
      const double lb = row(b.R0 * std::pow(10.0, e));
      if (lb > prev + 1e-12 * std::abs(prev)) monotone = false;
      prev = lb;
    }
    kv[key + "monotone_beyond_R0"] = monotone ? "true" : "false";
  }
  if (!csv) throw IoError("write failed for chain.csv");

  const YAML::Node tails = m.params["tail_checks"];
  std::vector<std::pair<int, double>> pairs{{0, 1.0}, {2, 1.0}, {5, 0.5}};
  if (tails) {
    if (!tails.IsSequence()) throw ConfigError("params.tail_checks: expected a list of [k, alpha]");
    pairs.clear();
    for (const auto& t : tails) {
      if (!t.IsSequence() || t.size() != 2) throw ConfigError("params.tail_checks: expected [k, alpha] pairs");
      pairs.emplace_back(t[0].as<int>(), t[1].as<double>());
    }
  }
  for (const auto& [k, alpha] : pairs) {
    if (k < 0 || !(alpha > 0.0)) throw ConfigError("params.tail_checks: need k >= 0 and alpha > 0");
    const double bound = tail_sum_bound(k, alpha);
    const double direct = tail_sum_direct(k, alpha);
    const std::string key = "tail.k" + std::to_string(k) + ".alpha" + format_double(alpha) + ".";
    kv[key + "bound"] = format_double(bound);
    kv[key + "direct"] = format_double(direct);
    kv[key + "dominates"] = direct <= bound ? "true" : "false";
  }

  if (m.params["kernel"]) {
    const fs::path path = fs::path(m.base_dir) / param_string(m.params, "kernel", "");
    const KernelGrid kernel = read_kernel_csv_file(path.string());
    if (kernel.dim() != d) throw ConfigError("params.kernel: dimension does not match the field");
    const EnvelopeReport g = envelope_ratio(kernel, GaussianEnvelope{1.0, 0.5 * c.kappa0, 2.0, d});
    kv["empirical.p2.C"] = format_double(g.sup_ratio);
    kv["empirical.p2.boundary_flag"] = g.boundary_flag ? "true" : "false";
    for (double delta : deltas) {
      const EnvelopeReport s = envelope_ratio(kernel, GaussianEnvelope{1.0, 0.5 * c.kappa0, 2.0 - delta, d});
      kv["empirical.p" + format_double(2.0 - delta) + ".C"] = format_double(s.sup_ratio);
    }
  }
  write_kv_file(dir, "bounds.txt", kv);
}

void run_command(const RunManifest& m, const CommandOptions& opt) {
#ifdef _OPENMP
  if (opt.threads > 0) omp_set_num_threads(opt.threads);
#endif
  if (m.command == "dmo") return cmd_dmo(m, opt);
  if (m.command == "freeze") return cmd_freeze(m, opt);
  if (m.command == "phi") return cmd_phi(m, opt);
  if (m.command == "build") return cmd_build(m, opt);
  if (m.command == "verify") return cmd_verify(m, opt);
  if (m.command == "bounds") return cmd_bounds(m, opt);
  if (m.command == "chain") return cmd_chain(m, opt);
  throw ConfigError("manifest.command: unknown command '" + m.command + "'");
}

}  // namespace levi
