#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "causalmesh/scenario.hpp"

namespace causalmesh {

/**
 * @brief Parsed command-line options shared by the subcommands.
 *
 * Exit codes: 0 clean run, 1 oracle found problems, 2 configuration or I/O
 * error. Output files are never silently overwritten; pass force to replace.
 */
struct CliOptions {
  std::string scenario_ref;           // file path or bundled scenario name
  std::string trace_path;             // verify: trace to replay
  std::string protocol;               // override (run) / narrow (sweep)
  std::optional<std::uint64_t> seed;  // highest precedence seed
  std::string out_dir = "out";
  int reps = 0;                       // 0 = subcommand default
  bool emit_trace = false;
  bool force = false;
};

int cmd_run(const CliOptions& opt);
int cmd_sweep(const CliOptions& opt);
int cmd_verify(const CliOptions& opt);

/// Loads a scenario from a file path, falling back to the bundled library.
Scenario load_scenario(const std::string& ref);

/// CAUSAL_MESH_SEED from the environment, if set (must parse as u64).
std::optional<std::uint64_t> env_seed();

}  // namespace causalmesh
