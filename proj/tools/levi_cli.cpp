#include "levi/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Fundamental solutions of non-divergence parabolic operators by the Levi parametrix"};
  app.require_subcommand(1);

  std::string config;
  levi::CommandOptions opt;
  const std::pair<const char*, const char*> commands[] = {
      {"dmo", "Oscillation and continuity moduli with Dini integrals"},
      {"freeze", "Frozen coefficient curve at an anchor point"},
      {"phi", "Frozen Gaussian kernel on a grid"},
      {"build", "Short-horizon kernel by the Levi series"},
      {"verify", "Mass, semigroup, residual, symmetry and oracle checks"},
      {"bounds", "Bound constants, chaining scan and tail sums"},
      {"chain", "Long-time kernel by semigroup composition"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Manifest file (YAML)")->required();
    sub->add_option("--out", opt.out_dir, "Output directory (overrides the manifest)");
    sub->add_option("--threads", opt.threads, "Worker cap; 0 keeps the runtime default")->check(CLI::NonNegativeNumber);
    sub->add_flag("--force", opt.force, "Run past guard rails that permit it");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(levi::ExitCode::config);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    levi::RunManifest m = levi::load_manifest(config);
    if (m.command.empty()) m.command = name;
    if (m.command != name)
      throw levi::ConfigError("manifest.command: '" + m.command + "' does not match subcommand '" + name + "'");
    levi::run_command(m, opt);
  } catch (const std::exception& e) {
    std::cerr << "levi " << name << ": " << e.what() << '\n';
    return static_cast<int>(levi::exit_code_for(e));
  }
  return 0;
}
