#include "levi/config.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace levi;

namespace {

const char* kManifest = R"(command: build
field:
  family: x_sine
  d: 1
  params: {amp: 0.3, base: 1.0}
params:
  grid:
    targets: {times: [0.25], centre: [0.0], half_width: 1.0, nodes: 5}
    sources: {times: [0.0], nodes: 1}
  parametrix: {delta0: 0.6, time_nodes: 16}
output: out
seed: 3
)";

}  // namespace

TEST_CASE("manifest parses and round-trips through serialization") {
  const RunManifest m = parse_manifest(kManifest, "/tmp");
  CHECK(m.command == "build");
  CHECK(m.field.family == "x_sine");
  CHECK(m.seed == 3);
  CHECK(m.output_dir == "out");
  const std::string once = serialize_manifest(m);
  const std::string twice = serialize_manifest(parse_manifest(once, "/tmp"));
  CHECK(once == twice);
}

TEST_CASE("manifest errors name the offending key") {
  try {
    parse_manifest("command: build\nfield: {family: const}\nbogus: 1\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_manifest("command: launch\nfield: {family: const}\n"), ConfigError);
  CHECK_THROWS_AS(make_field(parse_manifest("command: build\nfield: {family: nope}\n").field), ConfigError);
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.yaml"), IoError);
}

TEST_CASE("field families and derived ellipticity bounds") {
  FieldConfig c;
  c.family = "x_sine";
  const CoefficientField f = make_field(c);
  CHECK(f.lambda() == doctest::Approx(0.7));
  CHECK(f.Lambda() == doctest::Approx(1.3));
  CHECK(f(0.0, point1(0.5))(0, 0) == doctest::Approx(1.0 + 0.3 * std::sin(0.5)));

  c.family = "t_sine";
  const CoefficientField g = make_field(c);
  CHECK(g.space_independent());
  CHECK(g(1.0, point1(0.0))(0, 0) == doctest::Approx(2.0 + std::sin(1.0)));

  c.family = "const";
  c.d = 2;
  const CoefficientField h = make_field(c);
  CHECK(h.dim() == 2);
  CHECK(h.space_independent());
  CHECK(h.time_independent());

  c.family = "x_sine";
  c.d = 1;
  c.params["amp"] = 2.0;
  CHECK_THROWS_AS(make_field(c), ConfigError);
}

TEST_CASE("parametrix sub-config accepts auto and numeric delta0") {
  YAML::Node n = YAML::Load("{delta0: auto, K_max: 12}");
  ParametrixConfig a = parametrix_config(n);
  CHECK(a.K_max == 12);
  CHECK(a.delta0_provenance == Provenance::derived_formula);
  n = YAML::Load("{delta0: 0.4}");
  ParametrixConfig b = parametrix_config(n);
  CHECK(b.delta0 == 0.4);
  CHECK(b.delta0_provenance == Provenance::config_override);
  CHECK_THROWS_AS(parametrix_config(YAML::Load("{deltaO: 0.4}")), ConfigError);
}

TEST_CASE("kernel CSV round-trips bit-identically") {
  KernelGrid g;
  g.targets = tensor_points({0.3, 1.0 / 3.0}, point({0.1, -0.2}), 0.7, 3);
  g.sources = {{0.0, point({0.0, 0.0})}, {std::nextafter(0.1, 1.0), point({1e-300, -3.5})}};
  g.values = Eigen::MatrixXd::Random(g.targets.size(), g.sources.size());
  g.method = KernelMethod::parametrix;
  std::stringstream ss;
  write_kernel_csv(ss, g);
  const KernelGrid back = read_kernel_csv(ss);
  REQUIRE(back.targets.size() == g.targets.size());
  REQUIRE(back.sources.size() == g.sources.size());
  CHECK(back.method == KernelMethod::parametrix);
  for (std::size_t i = 0; i < g.targets.size(); ++i) {
    CHECK(back.targets[i].t == g.targets[i].t);
    CHECK(back.targets[i].x == g.targets[i].x);
  }
  CHECK(back.sources[1].t == g.sources[1].t);
  CHECK(back.sources[1].x == g.sources[1].x);
  CHECK((back.values.array() == g.values.array()).all());
}

TEST_CASE("key-value sidecar round-trips") {
  KeyValues kv{{"a", "1"}, {"b.c", "x y"}, {"z", format_double(0.1)}};
  std::stringstream ss;
  write_key_values(ss, kv);
  CHECK(read_key_values(ss) == kv);
  CHECK(format_double(0.1) == "0.10000000000000001");
}
