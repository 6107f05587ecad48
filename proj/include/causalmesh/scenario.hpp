#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "causalmesh/trace.hpp"

namespace causalmesh {

/// Raised for malformed or inconsistent scenario input (exit code 2 territory).
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TopologySpec {
  enum class Kind { Clique, RandomGraph, Explicit };
  Kind kind = Kind::Clique;
  int degree = 4;  // randomGraph target average degree
  // Explicit edges, optionally with a pinned latency.
  std::vector<std::tuple<ProcessId, ProcessId, std::optional<TimeMs>>> edges;
};

struct ScheduleAction {
  enum class Kind {
    Broadcast,
    AddLink,
    RemoveLink,
    Join,
    Leave,
    Crash,
    JoinRandom,
    LeaveRandom,
    AddRandomLink,
    RemoveRandomLink,
    DropPong,
  };
  TimeMs at_ms = 0;
  Kind kind = Kind::Broadcast;
  ProcessId process = 0;            // broadcast / join / leave / crash / drop_pong
  ProcessId from = 0, to = 0;       // link endpoints
  ProcessId contact = 0;            // join contact
  std::string body;                 // broadcast body
  std::optional<TimeMs> latency_ms; // pinned link latency
  std::uint64_t count = 1;          // drop_pong budget
};

struct Dynamics {
  TimeMs shuffle_period_ms = 0;  // 0 disables periodic view exchanges
  double shuffle_fraction = 0.5; // documented half-view rule; kept for the schema
  std::vector<ScheduleAction> schedule;
};

struct LatencyRamp {
  TimeMs start_ms = 0;
  TimeMs end_ms = 0;
  TimeMs ramp_duration_ms = 0;  // 0 means the ceiling is end_ms from the start
};

struct Workload {
  double broadcasts_per_process_per_sec = 0.0;
  std::uint64_t total_messages = 0;
};

struct GuardParams {
  std::optional<std::uint64_t> max_size;
  std::optional<int> max_retry;
  std::optional<TimeMs> timeout_ms;  // fixed timer duration
  bool timeout_auto = false;         // derive from latency ceiling and diameter
};

struct SweepGrid {
  std::vector<TimeMs> ramp_levels_ms;
  std::vector<std::string> protocols;
  std::vector<std::uint32_t> process_counts;
  int seeds = 1;
};

/**
 * @brief Everything a run needs; one JSON document per scenario.
 *
 * Field names in the JSON match the members here (camelCase in the file):
 * seed, processCount, initialTopology, dynamics, latencyRamp, workload,
 * protocol, guard, plus the optional knobs below.
 */
struct Scenario {
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  std::uint32_t process_count = 0;
  TopologySpec initial_topology;
  Dynamics dynamics;
  LatencyRamp latency_ramp;
  Workload workload;
  std::string protocol = "pc";  // rbroadcast | pc | vc
  GuardParams guard;

  bool allow_partition = false;
  TimeMs duration_ms = 60000;          // dynamics and workload horizon
  TimeMs metrics_interval_ms = 1000;
  TimeMs direct_latency_ms = 20;       // pong return channel
  std::uint32_t path_sample_sources = 16;
  std::string trace_detail = "full";   // full | payloads (skip ping/pong hops)
  std::optional<TimeMs> time_limit_ms; // drain cap; default derived
  std::optional<SweepGrid> sweep;
};

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_canonical_json(const Scenario& sc);
std::uint64_t scenario_hash(const Scenario& sc);

/// Throws ScenarioError when a field is out of range or inconsistent.
void validate(const Scenario& sc);

}  // namespace causalmesh
