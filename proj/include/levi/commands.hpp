#pragma once

#include "levi/config.hpp"

#include <exception>
#include <string>

namespace levi {

enum class ExitCode : int {
  ok = 0,
  unexpected = 1,
  config = 2,
  guard_rail = 3,
  verification = 4,
  io = 5,
};

/// Maps the error hierarchy onto exit codes.
ExitCode exit_code_for(const std::exception& e);

struct CommandOptions {
  /// Output directory; overrides the manifest's `output`.
  std::string out_dir;
  bool force = false;
  /// Worker cap; 0 keeps the runtime default.
  int threads = 0;
};

/// Files: modulus.csv, dini.txt.
void cmd_dmo(const RunManifest& m, const CommandOptions& opt);
/// Files: frozen_curve.csv, freeze.txt.
void cmd_freeze(const RunManifest& m, const CommandOptions& opt);
/// Files: kernel.csv (frozen kernel).
void cmd_phi(const RunManifest& m, const CommandOptions& opt);
/// Files: kernel.csv, terms.txt, envelope.txt.
void cmd_build(const RunManifest& m, const CommandOptions& opt);
/// Files: verify.txt. Throws VerificationError when a check fails.
void cmd_verify(const RunManifest& m, const CommandOptions& opt);
/// Files: bounds.txt, chain.csv.
void cmd_bounds(const RunManifest& m, const CommandOptions& opt);
/// Files: kernel.csv, chain.txt (long-time kernel by composition).
void cmd_chain(const RunManifest& m, const CommandOptions& opt);

/// Dispatches on m.command.
void run_command(const RunManifest& m, const CommandOptions& opt);

/// Label for a uniform-modulus profile: "constant-in-x; Dini trivially",
/// "Dini (Lipschitz)", "Dini (Holder, alpha ~ a)", "Dini", "DMO_x (not Dini
/// continuous)" or "non-Dini".
std::string classify_modulus(const CoefficientField& field, const ModulusProfile& rho,
                             const ModulusProfile& omega);

}  // namespace levi
