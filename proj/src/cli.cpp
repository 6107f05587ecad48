#include "causalmesh/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "causalmesh/causal_oracle.hpp"
#include "causalmesh/metrics.hpp"
#include "causalmesh/scenario_library.hpp"
#include "causalmesh/sim_engine.hpp"

namespace causalmesh {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Cell seeds depend on the grid's n and rep but never on protocol or latency
// level, so every protocol faces the identical topology and workload at every
// level of a sweep.
std::uint64_t cell_seed(std::uint64_t base, std::uint64_t n, std::uint64_t rep) {
  std::uint64_t s = base ^ (n * 1000003ULL + rep + 1);
  return splitmix64(s);
}

void ensure_writable(const fs::path& f, bool force) {
  if (!force && fs::exists(f))
    throw CliError("refusing to overwrite " + f.string() + " (pass --force to replace)");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot write " + path.string());
  out << content;
  if (!out) throw CliError("write failed for " + path.string());
}

std::uint64_t effective_seed(const CliOptions& opt, const Scenario& sc) {
  if (opt.seed) return *opt.seed;
  if (auto e = env_seed()) return *e;
  return sc.seed;
}

json verdict_json(const Verdict& v) { return json::parse(v.to_json()); }

json run_summary(std::uint64_t seed, const RunResult& r, const Verdict& v) {
  return json{{"seed", seed},
              {"quiescent", r.quiescent},
              {"outcome", r.outcome},
              {"events", r.counters.events_processed},
              {"broadcasts", r.counters.broadcasts},
              {"deliveries", r.counters.deliveries},
              {"pingPhases", r.counters.ping_phases},
              {"retries", r.counters.retries},
              {"abandonedLinks", r.counters.abandoned_links},
              {"violations", v.violation_count},
              {"duplicates", v.duplicate_count},
              {"missing", v.missing_count},
              {"breaches", v.breach_count},
              {"structuralErrors", v.structural_errors.size()}};
}

void fill_totals(MetricsReport& m, const Verdict& v) {
  m.violations = v.violation_count;
  m.duplicates = v.duplicate_count;
}

bool run_is_clean(const RunResult& r, const Verdict& v) { return v.clean() && r.quiescent; }

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("CAUSAL_MESH_SEED");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(raw, &end, 10);
  if (end == raw || *end != '\0') throw CliError("CAUSAL_MESH_SEED is not a number: " + std::string(raw));
  return static_cast<std::uint64_t>(value);
}

Scenario load_scenario(const std::string& ref) {
  std::error_code ec;
  if (fs::exists(ref, ec)) return scenario_from_json(read_file(ref));
  if (const std::string* text = find_bundled_scenario(ref)) return scenario_from_json(*text);
  std::string names;
  for (const auto& [name, body] : bundled_scenarios()) {
    if (!names.empty()) names += ", ";
    names += name;
  }
  throw CliError("scenario '" + ref + "' is neither a file nor a bundled name (bundled: " + names + ")");
}

int cmd_run(const CliOptions& opt) {
  return guarded([&]() -> int {
    Scenario sc = load_scenario(opt.scenario_ref);
    if (!opt.protocol.empty()) {
      sc.protocol = opt.protocol;
      validate(sc);
    }
    const std::uint64_t base_seed = effective_seed(opt, sc);
    const int reps = std::max(1, opt.reps);

    const fs::path out(opt.out_dir);
    fs::create_directories(out);
    const fs::path csv_path = out / "metrics.csv";
    const fs::path verdict_path = out / "verdict.json";
    const fs::path manifest_path = out / "manifest.json";
    ensure_writable(csv_path, opt.force);
    ensure_writable(verdict_path, opt.force);
    ensure_writable(manifest_path, opt.force);
    std::vector<fs::path> trace_paths;
    if (opt.emit_trace) {
      for (int i = 0; i < reps; ++i) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
        trace_paths.push_back(reps == 1 ? out / "trace.jsonl"
                                        : out / ("trace_seed" + std::to_string(seed) + ".jsonl"));
        ensure_writable(trace_paths.back(), opt.force);
      }
    }

    std::ostringstream csv;
    write_csv_header(csv);
    json runs = json::array();
    json verdict_runs = json::array();
    bool all_clean = true;
    std::uint64_t tot_violations = 0, tot_dups = 0, tot_missing = 0, tot_breaches = 0,
                  tot_structural = 0;

    for (int i = 0; i < reps; ++i) {
      Scenario rep_sc = sc;
      rep_sc.seed = base_seed + static_cast<std::uint64_t>(i);
      RunResult result = run_simulation(rep_sc);
      const Verdict verdict = verify(result.trace);
      fill_totals(result.metrics, verdict);
      write_csv_rows(csv, result.metrics);
      if (opt.emit_trace) {
        std::ofstream tout(trace_paths[static_cast<std::size_t>(i)], std::ios::binary);
        if (!tout) throw CliError("cannot write " + trace_paths[static_cast<std::size_t>(i)].string());
        result.trace.write_jsonl(tout);
      }
      runs.push_back(run_summary(rep_sc.seed, result, verdict));
      verdict_runs.push_back(json{{"seed", rep_sc.seed}, {"verdict", verdict_json(verdict)}});
      all_clean = all_clean && run_is_clean(result, verdict);
      tot_violations += verdict.violation_count;
      tot_dups += verdict.duplicate_count;
      tot_missing += verdict.missing_count;
      tot_breaches += verdict.breach_count;
      tot_structural += verdict.structural_errors.size();
      std::cout << "run " << sc.name << " protocol=" << rep_sc.protocol << " seed=" << rep_sc.seed
                << " events=" << result.counters.events_processed
                << " violations=" << verdict.violation_count
                << " duplicates=" << verdict.duplicate_count << " outcome=" << result.outcome
                << "\n";
    }

    write_file(csv_path, csv.str());
    json verdict_doc{{"runs", verdict_runs},
                     {"totals",
                      {{"violations", tot_violations},
                       {"duplicates", tot_dups},
                       {"missing", tot_missing},
                       {"breaches", tot_breaches},
                       {"structuralErrors", tot_structural},
                       {"clean", all_clean}}}};
    write_file(verdict_path, verdict_doc.dump(2) + "\n");
    json outputs = json::array({csv_path.string(), verdict_path.string(), manifest_path.string()});
    for (const auto& t : trace_paths) outputs.push_back(t.string());
    json manifest{{"command", "run"},
                  {"scenario", sc.name},
                  {"scenarioHash", scenario_hash(sc)},
                  {"protocol", sc.protocol},
                  {"baseSeed", base_seed},
                  {"reps", reps},
                  {"outputs", outputs},
                  {"runs", runs}};
    write_file(manifest_path, manifest.dump(2) + "\n");
    return all_clean ? 0 : 1;
  });
}

int cmd_sweep(const CliOptions& opt) {
  return guarded([&]() -> int {
    Scenario sc = load_scenario(opt.scenario_ref);
    if (!sc.sweep) throw CliError("scenario '" + sc.name + "' has no sweep grid");
    SweepGrid grid = *sc.sweep;
    if (grid.ramp_levels_ms.empty())
      grid.ramp_levels_ms = {std::max(sc.latency_ramp.start_ms, sc.latency_ramp.end_ms)};
    if (grid.protocols.empty()) grid.protocols = {sc.protocol};
    if (grid.process_counts.empty()) grid.process_counts = {sc.process_count};
    if (!opt.protocol.empty()) grid.protocols = {opt.protocol};
    const int seeds = opt.reps > 0 ? opt.reps : std::max(1, grid.seeds);
    const std::uint64_t base_seed = effective_seed(opt, sc);

    const fs::path out(opt.out_dir);
    fs::create_directories(out);
    const fs::path csv_path = out / "metrics.csv";
    const fs::path verdict_path = out / "verdict.json";
    const fs::path manifest_path = out / "manifest.json";
    ensure_writable(csv_path, opt.force);
    ensure_writable(verdict_path, opt.force);
    ensure_writable(manifest_path, opt.force);

    std::ostringstream csv;
    write_csv_header(csv);
    json cells = json::array();
    bool all_clean = true;

    for (std::uint32_t n : grid.process_counts) {
      for (const std::string& proto : grid.protocols) {
        for (TimeMs level : grid.ramp_levels_ms) {
          for (int rep = 0; rep < seeds; ++rep) {
            Scenario cell = sc;
            cell.sweep.reset();
            cell.process_count = n;
            cell.protocol = proto;
            cell.latency_ramp = LatencyRamp{level, level, 0};
            cell.seed = cell_seed(base_seed, n, static_cast<std::uint64_t>(rep));
            validate(cell);
            RunResult result = run_simulation(cell);
            const Verdict verdict = verify(result.trace);
            fill_totals(result.metrics, verdict);
            write_csv_rows(csv, result.metrics);
            all_clean = all_clean && run_is_clean(result, verdict);
            json summary = run_summary(cell.seed, result, verdict);
            summary["nProcesses"] = n;
            summary["protocol"] = proto;
            summary["rampLevelMs"] = level;
            summary["rep"] = rep;
            cells.push_back(std::move(summary));
            std::cout << "sweep n=" << n << " protocol=" << proto << " level=" << level
                      << "ms rep=" << rep << " seed=" << cell.seed
                      << " violations=" << verdict.violation_count
                      << " pingPhases=" << result.counters.ping_phases
                      << " outcome=" << result.outcome << "\n";
          }
        }
      }
    }

    write_file(csv_path, csv.str());
    json verdict_doc{{"cells", cells}, {"clean", all_clean}};
    write_file(verdict_path, verdict_doc.dump(2) + "\n");
    json manifest{{"command", "sweep"},
                  {"scenario", sc.name},
                  {"scenarioHash", scenario_hash(sc)},
                  {"baseSeed", base_seed},
                  {"seedsPerCell", seeds},
                  {"grid",
                   {{"processCounts", grid.process_counts},
                    {"protocols", grid.protocols},
                    {"rampLevelsMs", grid.ramp_levels_ms}}},
                  {"outputs", json::array({csv_path.string(), verdict_path.string(), manifest_path.string()})}};
    write_file(manifest_path, manifest.dump(2) + "\n");
    return all_clean ? 0 : 1;
  });
}

int cmd_verify(const CliOptions& opt) {
  return guarded([&]() -> int {
    if (opt.trace_path.empty()) throw CliError("verify needs --trace PATH");
    std::ifstream in(opt.trace_path, std::ios::binary);
    if (!in) throw CliError("cannot open " + opt.trace_path);
    Trace trace;
    try {
      trace = Trace::read_jsonl(in);
    } catch (const std::exception& e) {
      throw CliError("bad trace file " + opt.trace_path + ": " + e.what());
    }
    const Verdict verdict = verify(trace);
    if (opt.out_dir.empty()) {
      std::cout << verdict.to_json() << "\n";
    } else {
      const fs::path out(opt.out_dir);
      fs::create_directories(out);
      const fs::path verdict_path = out / "verdict.json";
      ensure_writable(verdict_path, opt.force);
      write_file(verdict_path, verdict.to_json() + "\n");
      std::cout << "verify " << opt.trace_path << ": violations=" << verdict.violation_count
                << " duplicates=" << verdict.duplicate_count << " missing=" << verdict.missing_count
                << " breaches=" << verdict.breach_count << "\n";
    }
    return verdict.clean() ? 0 : 1;
  });
}

}  // namespace causalmesh
