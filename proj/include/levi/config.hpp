#pragma once

#include "levi/coefficients.hpp"
#include "levi/oracle.hpp"
#include "levi/parametrix.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <string>

namespace levi {

struct FieldConfig {
  std::string family = "const";
  int d = 1;
  /// Ellipticity bounds; NaN means derived from the family parameters.
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double Lambda = std::numeric_limits<double>::quiet_NaN();
  YAML::Node params = YAML::Node(YAML::NodeType::Map);
};

/// One manifest = one command.
struct RunManifest {
  std::string command;
  FieldConfig field;
  YAML::Node params = YAML::Node(YAML::NodeType::Map);
  std::string output_dir;
  std::uint64_t seed = 0;
  /// Directory of the manifest file; relative paths resolve against it.
  std::string base_dir;
};

RunManifest parse_manifest(const std::string& yaml_text, const std::string& base_dir = ".");
RunManifest load_manifest(const std::string& path);
/// Canonical text: fixed top-level order, map keys sorted, doubles in 17 digits.
std::string serialize_manifest(const RunManifest& m);

CoefficientField make_field(const FieldConfig& cfg, const std::string& base_dir = ".");

/// Typed accessors that name the offending key in error messages.
double param_double(const YAML::Node& node, const std::string& key, double fallback,
                    const std::string& where = "params");
int param_int(const YAML::Node& node, const std::string& key, int fallback,
              const std::string& where = "params");
bool param_bool(const YAML::Node& node, const std::string& key, bool fallback,
                const std::string& where = "params");
std::string param_string(const YAML::Node& node, const std::string& key, const std::string& fallback,
                         const std::string& where = "params");
std::vector<double> param_list(const YAML::Node& node, const std::string& key,
                               const std::vector<double>& fallback, const std::string& where = "params");
/// Rejects keys outside `allowed`.
void check_keys(const YAML::Node& node, const std::vector<std::string>& allowed, const std::string& where);

/// Reads a `parametrix` sub-map; delta0 may be a number or "auto".
ParametrixConfig parametrix_config(const YAML::Node& node, const std::string& where = "params.parametrix");
FDGridSpec fd_grid_spec(const YAML::Node& node, const std::string& where = "params.oracle");

}  // namespace levi
