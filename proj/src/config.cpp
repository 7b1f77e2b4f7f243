#include "levi/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace levi {

namespace {

const std::vector<std::string> kCommands{"dmo", "freeze", "phi", "build", "verify", "bounds", "chain"};

void emit_sorted(YAML::Emitter& out, const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      std::vector<std::pair<std::string, YAML::Node>> items;
      for (const auto& kv : node) items.emplace_back(kv.first.as<std::string>(), kv.second);
      std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      out << YAML::BeginMap;
      for (const auto& [k, v] : items) {
        out << YAML::Key << k << YAML::Value;
        emit_sorted(out, v);
      }
      out << YAML::EndMap;
      break;
    }
    case YAML::NodeType::Sequence:
      out << YAML::Flow << YAML::BeginSeq;
      for (const auto& v : node) emit_sorted(out, v);
      out << YAML::EndSeq;
      break;
    case YAML::NodeType::Scalar:
      out << node.Scalar();
      break;
    default:
      out << YAML::Null;
  }
}

YAML::Node child(const YAML::Node& node, const std::string& key) {
  if (!node || !node.IsMap()) return YAML::Node();
  return node[key];
}

}  // namespace

void check_keys(const YAML::Node& node, const std::vector<std::string>& allowed, const std::string& where) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw ConfigError(where + ": expected a map");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(where + "." + key + ": unknown key");
  }
}

double param_double(const YAML::Node& node, const std::string& key, double fallback,
                    const std::string& where) {
  const YAML::Node v = child(node, key);
  if (!v) return fallback;
  try {
    return v.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + ": expected a number");
  }
}

int param_int(const YAML::Node& node, const std::string& key, int fallback, const std::string& where) {
  const YAML::Node v = child(node, key);
  if (!v) return fallback;
  try {
    return v.as<int>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + ": expected an integer");
  }
}

bool param_bool(const YAML::Node& node, const std::string& key, bool fallback, const std::string& where) {
  const YAML::Node v = child(node, key);
  if (!v) return fallback;
  try {
    return v.as<bool>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + ": expected true or false");
  }
}

std::string param_string(const YAML::Node& node, const std::string& key, const std::string& fallback,
                         const std::string& where) {
  const YAML::Node v = child(node, key);
  if (!v) return fallback;
  if (!v.IsScalar()) throw ConfigError(where + "." + key + ": expected a string");
  return v.Scalar();
}

std::vector<double> param_list(const YAML::Node& node, const std::string& key,
                               const std::vector<double>& fallback, const std::string& where) {
  const YAML::Node v = child(node, key);
  if (!v) return fallback;
  try {
    if (v.IsScalar()) return {v.as<double>()};
    return v.as<std::vector<double>>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + ": expected a number or a list of numbers");
  }
}

RunManifest parse_manifest(const std::string& yaml_text, const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("manifest: YAML parse error: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("manifest: top level must be a map");
  check_keys(root, {"command", "field", "params", "output", "seed"}, "manifest");

  RunManifest m;
  m.base_dir = base_dir;
  m.command = param_string(root, "command", "", "manifest");
  if (std::find(kCommands.begin(), kCommands.end(), m.command) == kCommands.end())
    throw ConfigError("manifest.command: unknown command '" + m.command + "'");
  m.output_dir = param_string(root, "output", "", "manifest");
  if (root["seed"]) {
    try {
      m.seed = root["seed"].as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      throw ConfigError("manifest.seed: expected a nonnegative integer");
    }
  }
  if (root["params"]) {
    if (!root["params"].IsMap()) throw ConfigError("manifest.params: expected a map");
    m.params = YAML::Clone(root["params"]);
  }

  const YAML::Node f = root["field"];
  if (!f) throw ConfigError("manifest.field: missing");
  check_keys(f, {"family", "d", "lambda", "Lambda", "params"}, "field");
  m.field.family = param_string(f, "family", "", "field");
  m.field.d = param_int(f, "d", 1, "field");
  m.field.lambda = param_double(f, "lambda", m.field.lambda, "field");
  m.field.Lambda = param_double(f, "Lambda", m.field.Lambda, "field");
  if (f["params"]) {
    if (!f["params"].IsMap()) throw ConfigError("field.params: expected a map");
    m.field.params = YAML::Clone(f["params"]);
  }
  return m;
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_manifest(ss.str(), dir.empty() ? "." : dir.string());
}

std::string serialize_manifest(const RunManifest& m) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "command" << YAML::Value << m.command;
  out << YAML::Key << "seed" << YAML::Value << m.seed;
  if (!m.output_dir.empty()) out << YAML::Key << "output" << YAML::Value << m.output_dir;
  out << YAML::Key << "field" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "family" << YAML::Value << m.field.family;
  out << YAML::Key << "d" << YAML::Value << m.field.d;
  if (!std::isnan(m.field.lambda)) out << YAML::Key << "lambda" << YAML::Value << format_double(m.field.lambda);
  if (!std::isnan(m.field.Lambda)) out << YAML::Key << "Lambda" << YAML::Value << format_double(m.field.Lambda);
  out << YAML::Key << "params" << YAML::Value;
  emit_sorted(out, m.field.params);
  out << YAML::EndMap;
  out << YAML::Key << "params" << YAML::Value;
  emit_sorted(out, m.params);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

Point param_point(const YAML::Node& node, const std::string& key, int d, const std::string& where) {
  const auto v = param_list(node, key, std::vector<double>(d, 0.0), where);
  if (static_cast<int>(v.size()) != d) throw ConfigError(where + "." + key + ": expected " + std::to_string(d) + " entries");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), d);
}

void resolve_bounds(const FieldConfig& cfg, double lo, double hi, double& lambda, double& Lambda) {
  lambda = std::isnan(cfg.lambda) ? lo : cfg.lambda;
  Lambda = std::isnan(cfg.Lambda) ? hi : cfg.Lambda;
}

}  // namespace

CoefficientField make_field(const FieldConfig& cfg, const std::string& base_dir) {
  const int d = cfg.d;
  if (d < 1 || d > kMaxDim) throw ConfigError("field.d: must be 1, 2 or 3");
  const YAML::Node& p = cfg.params;
  const std::string where = "field.params";
  double lambda = 0.0;
  double Lambda = 0.0;

  if (cfg.family == "const") {
    check_keys(p, {"a"}, where);
    const auto a = param_list(p, "a", {1.0}, where);
    SymMat m(d, d);
    if (a.size() == 1) {
      m = a[0] * SymMat::Identity(d, d);
    } else if (static_cast<int>(a.size()) == d * d) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = a[i * d + j];
    } else {
      throw ConfigError(where + ".a: expected a scalar or d*d entries");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(0.5 * (m + m.transpose())));
    resolve_bounds(cfg, es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff(), lambda, Lambda);
    return constant_field(m, lambda, Lambda);
  }
  if (cfg.family == "t_sine" || cfg.family == "x_sine") {
    check_keys(p, {"base", "amp", "freq"}, where);
    const bool in_time = cfg.family == "t_sine";
    const double base = param_double(p, "base", in_time ? 2.0 : 1.0, where);
    const double amp = param_double(p, "amp", in_time ? 1.0 : 0.3, where);
    const double freq = param_double(p, "freq", 1.0, where);
    resolve_bounds(cfg, base - std::abs(amp), base + std::abs(amp), lambda, Lambda);
    return in_time ? t_sine_field(d, base, amp, freq, lambda, Lambda)
                   : x_sine_field(d, base, amp, freq, lambda, Lambda);
  }
  if (cfg.family == "holder") {
    check_keys(p, {"base", "amp", "alpha", "center", "cap"}, where);
    const double base = param_double(p, "base", 1.0, where);
    const double amp = param_double(p, "amp", 1.0, where);
    const double alpha = param_double(p, "alpha", 0.5, where);
    const double cap = param_double(p, "cap", 1.0, where);
    const double top = base + amp * std::pow(cap, alpha);
    resolve_bounds(cfg, std::min(base, top), std::max(base, top), lambda, Lambda);
    return holder_field(d, base, amp, alpha, param_point(p, "center", d, where), cap, lambda, Lambda);
  }
  if (cfg.family == "log_modulus") {
    check_keys(p, {"base", "amp", "center"}, where);
    const double base = param_double(p, "base", 1.0, where);
    const double amp = param_double(p, "amp", 0.5, where);
    const double top = base + 0.5 * amp;
    resolve_bounds(cfg, std::min(base, top), std::max(base, top), lambda, Lambda);
    return log_modulus_field(d, base, amp, param_point(p, "center", d, where), lambda, Lambda);
  }
  if (cfg.family == "sampled") {
    check_keys(p, {"path"}, where);
    std::string path = param_string(p, "path", "", where);
    if (path.empty()) throw ConfigError(where + ".path: required for the sampled family");
    if (std::filesystem::path(path).is_relative()) path = (std::filesystem::path(base_dir) / path).string();
    SampledGrid grid = read_sampled_csv_file(path);
    if (grid.dim != d) throw ConfigError("field.d: does not match the sampled grid dimension");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const SymMat& m : grid.values) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(m)};
      lo = std::min(lo, es.eigenvalues().minCoeff());
      hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    resolve_bounds(cfg, lo, hi, lambda, Lambda);
    return sampled_field(std::move(grid), lambda, Lambda);
  }
  throw ConfigError("field.family: unknown family '" + cfg.family + "'");
}

ParametrixConfig parametrix_config(const YAML::Node& node, const std::string& where) {
  check_keys(node,
             {"eps0", "delta0", "K_max", "series_tol", "time_nodes", "space_nodes_per_dim",
              "truncation_multiplier", "contraction_slack", "tau_nodes", "xi_nodes_per_dim"},
             where);
  ParametrixConfig c;
  c.eps0 = param_double(node, "eps0", c.eps0, where);
  if (param_string(node, "delta0", "auto", where) != "auto") {
    c.delta0 = param_double(node, "delta0", c.delta0, where);
    c.delta0_provenance = Provenance::config_override;
  }
  c.K_max = param_int(node, "K_max", c.K_max, where);
  c.series_tol = param_double(node, "series_tol", c.series_tol, where);
  c.time_nodes = param_int(node, "time_nodes", c.time_nodes, where);
  c.space_nodes_per_dim = param_int(node, "space_nodes_per_dim", c.space_nodes_per_dim, where);
  c.truncation_multiplier = param_double(node, "truncation_multiplier", c.truncation_multiplier, where);
  c.contraction_slack = param_double(node, "contraction_slack", c.contraction_slack, where);
  c.grid.tau_nodes = param_int(node, "tau_nodes", c.grid.tau_nodes, where);
  c.grid.xi_nodes_per_dim = param_int(node, "xi_nodes_per_dim", c.grid.xi_nodes_per_dim, where);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

FDGridSpec fd_grid_spec(const YAML::Node& node, const std::string& where) {
  check_keys(node, {"half_width", "nodes_per_dim", "dt", "theta", "initial_delta", "centre"}, where);
  FDGridSpec s;
  s.half_width = param_double(node, "half_width", s.half_width, where);
  s.nodes_per_dim = param_int(node, "nodes_per_dim", s.nodes_per_dim, where);
  s.dt = param_double(node, "dt", s.dt, where);
  s.theta = param_double(node, "theta", s.theta, where);
  s.initial_delta = param_bool(node, "initial_delta", s.initial_delta, where);
  if (child(node, "centre")) {
    const auto c = param_list(node, "centre", {}, where);
    s.centre = Eigen::Map<const Eigen::VectorXd>(c.data(), c.size());
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

}  // namespace levi
