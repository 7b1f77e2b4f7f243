#include "levi/kernel_grid.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("levi_cli_tests_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write_manifest(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / (name + ".yaml");
  std::ofstream(p) << text;
  return p;
}

int run(const std::string& sub, const fs::path& config, const fs::path& out, const std::string& extra = "") {
  const std::string cmd = std::string(LEVI_CLI_PATH) + " " + sub + " --config " + config.string() + " --out " +
                          out.string() + " " + extra + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

levi::KeyValues kv_file(const fs::path& p) {
  std::ifstream in(p);
  return levi::read_key_values(in);
}

const char* kPhi = R"(command: phi
field: {family: const, d: 1}
params:
  grid:
    targets: {times: [0.5, 1.0], centre: [0.0], half_width: 3.0, nodes: 41}
    sources: {times: [0.0], centre: [0.0], nodes: 1}
)";

}  // namespace

TEST_CASE("phi succeeds and is byte-identical across runs and thread caps") {
  const fs::path m = write_manifest("phi", kPhi);
  REQUIRE(run("phi", m, scratch() / "phi_a") == 0);
  REQUIRE(run("phi", m, scratch() / "phi_b", "--threads 1") == 0);
  const std::string a = slurp(scratch() / "phi_a" / "kernel.csv");
  CHECK(!a.empty());
  CHECK(a == slurp(scratch() / "phi_b" / "kernel.csv"));
  CHECK(fs::exists(scratch() / "phi_a" / "manifest.yaml"));
}

TEST_CASE("bounds reports closed-form constants and rejects delta at the endpoints") {
  const fs::path m = write_manifest("bounds", "command: bounds\nfield: {family: const, d: 1}\n");
  REQUIRE(run("bounds", m, scratch() / "bounds") == 0);
  const auto kv = kv_file(scratch() / "bounds" / "bounds.txt");
  CHECK(std::stod(kv.at("kappa0")) == doctest::Approx(0.25));
  CHECK(std::stod(kv.at("C0")) == doctest::Approx(0.28209479177387814));
  CHECK(kv.at("delta.0.5.monotone_beyond_R0") == "true");
  CHECK(fs::exists(scratch() / "bounds" / "chain.csv"));
  for (const char* bad : {"0", "1"}) {
    const fs::path b = write_manifest(std::string("bounds_bad") + bad,
                                      std::string("command: bounds\nfield: {family: const}\nparams: {deltas: [") + bad + "]}\n");
    CHECK(run("bounds", b, scratch() / "bounds_bad") == 2);
  }
}

TEST_CASE("exit codes: config, guard rail, verification, I/O") {
  const fs::path unknown = write_manifest("unknown", "command: phi\nfield: {family: const}\nparams: {gird: 1}\n");
  CHECK(run("phi", unknown, scratch() / "x") == 2);

  const fs::path mismatch = write_manifest("mismatch", kPhi);
  CHECK(run("dmo", mismatch, scratch() / "x") == 2);

  const fs::path horizon = write_manifest("horizon", R"(command: build
field: {family: x_sine}
params:
  grid:
    targets: {times: [0.5], centre: [0.0], nodes: 1}
    sources: {times: [0.0], centre: [0.0], nodes: 1}
  parametrix: {delta0: 0.3}
)");
  CHECK(run("build", horizon, scratch() / "x") == 3);

  const fs::path nondini = write_manifest("nondini", R"(command: build
field: {family: log_modulus}
params:
  grid:
    targets: {times: [0.01], centre: [0.0], nodes: 1}
    sources: {times: [0.0], centre: [0.0], nodes: 1}
)");
  CHECK(run("build", nondini, scratch() / "x") == 3);

  CHECK(run("phi", scratch() / "missing.yaml", scratch() / "x") == 5);
  CHECK(run("phi", mismatch, "/proc/levi_cannot_write") == 5);
}

TEST_CASE("verify flags a corrupted kernel") {
  const fs::path phi = write_manifest("phi_grid", R"(command: phi
field: {family: const}
params:
  grid:
    targets: {times: [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8], centre: [0.0], half_width: 2.0, nodes: 81}
    sources: {times: [0.0], centre: [0.0], nodes: 1}
)");
  REQUIRE(run("phi", phi, scratch() / "clean") == 0);
  const fs::path clean = scratch() / "clean" / "kernel.csv";
  levi::KernelGrid g = levi::read_kernel_csv_file(clean.string());
  const std::string verify = "command: verify\nfield: {family: const}\nparams: {kernel: KERNEL, checks: [residual, envelope]}\n";
  auto manifest_for = [&](const std::string& name, const fs::path& kernel) {
    std::string text = verify;
    text.replace(text.find("KERNEL"), 6, kernel.string());
    return write_manifest(name, text);
  };
  CHECK(run("verify", manifest_for("verify_clean", clean), scratch() / "vclean") == 0);
  CHECK(kv_file(scratch() / "vclean" / "verify.txt").at("overall") == "pass");

  g.values.row(3 * 81 + 40) *= 10.0;
  const fs::path bad = scratch() / "corrupt.csv";
  levi::write_kernel_csv_file(bad.string(), g);
  CHECK(run("verify", manifest_for("verify_bad", bad), scratch() / "vbad") == 4);
  const auto kv = kv_file(scratch() / "vbad" / "verify.txt");
  CHECK(kv.at("check.residual.status") == "fail");
  CHECK(kv.at("check.envelope.status") == "fail");
}

TEST_CASE("dmo classifies the registry fields") {
  const fs::path c = write_manifest("dmo_const", "command: dmo\nfield: {family: const}\n");
  REQUIRE(run("dmo", c, scratch() / "dmo_const") == 0);
  CHECK(kv_file(scratch() / "dmo_const" / "dini.txt").at("classification") == "constant-in-x; Dini trivially");
  const fs::path s = write_manifest("dmo_sine", "command: dmo\nfield: {family: x_sine}\n");
  REQUIRE(run("dmo", s, scratch() / "dmo_sine") == 0);
  CHECK(kv_file(scratch() / "dmo_sine" / "dini.txt").at("classification") == "Dini (Lipschitz)");
  const fs::path l = write_manifest("dmo_log", "command: dmo\nfield: {family: log_modulus}\n");
  REQUIRE(run("dmo", l, scratch() / "dmo_log") == 0);
  const auto kv = kv_file(scratch() / "dmo_log" / "dini.txt");
  CHECK(kv.at("classification") == "non-Dini");
  CHECK(kv.at("rho_diverged") == "true");
}
