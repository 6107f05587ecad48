#include <CLI11.hpp>

#include "causalmesh/cli.hpp"

// Entry point for the causal-mesh simulator: run one scenario, sweep a grid,
// or re-verify a recorded trace. All determinism lives in the library; this
// file only parses flags.
int main(int argc, char** argv) {
  CLI::App app{"Deterministic broadcast-protocol simulator with a causal-order oracle"};
  app.require_subcommand(1);

  causalmesh::CliOptions opt;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* cmd, bool wants_scenario) {
    if (wants_scenario)
      cmd->add_option("--scenario", opt.scenario_ref, "Scenario file path or bundled name")
          ->required();
    cmd->add_option("--seed", seed_flag, "Base seed (overrides CAUSAL_MESH_SEED and the scenario)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", opt.out_dir, "Output directory (default: out)");
    cmd->add_flag("--force", opt.force, "Overwrite existing output files");
  };

  CLI::App* run = app.add_subcommand("run", "Run a scenario and verify the trace");
  add_common(run, true);
  run->add_option("--protocol", opt.protocol, "Protocol override: rbroadcast, pc, or vc");
  run->add_option("--reps", opt.reps, "Repetitions with consecutive seeds (default 1)")
      ->check(CLI::PositiveNumber);
  run->add_flag("--emit-trace", opt.emit_trace, "Write the event trace as JSONL");

  CLI::App* sweep = app.add_subcommand("sweep", "Run the scenario's sweep grid");
  add_common(sweep, true);
  sweep->add_option("--protocol", opt.protocol, "Narrow the grid to one protocol");
  sweep->add_option("--reps", opt.reps, "Seeds per cell (overrides the grid)")
      ->check(CLI::PositiveNumber);

  CLI::App* verify = app.add_subcommand("verify", "Replay a recorded trace through the oracle");
  verify->add_option("--trace", opt.trace_path, "Trace file (JSONL) to verify")->required();
  verify->add_option("--out", opt.out_dir, "Output directory; empty prints the verdict to stdout");
  verify->add_flag("--force", opt.force, "Overwrite an existing verdict.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // flag errors are configuration errors
  }

  for (const CLI::App* cmd : {run, sweep}) {
    if (cmd->parsed() && cmd->count("--seed") > 0) opt.seed = seed_flag;
  }

  if (run->parsed()) return causalmesh::cmd_run(opt);
  if (sweep->parsed()) return causalmesh::cmd_sweep(opt);
  if (verify->count("--out") == 0) opt.out_dir.clear();  // default: verdict to stdout
  return causalmesh::cmd_verify(opt);
}
