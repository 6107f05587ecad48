#include "causalmesh/scenario.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace causalmesh {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ScenarioError("scenario: " + msg); }

TopologySpec parse_topology(const json& j) {
  TopologySpec t;
  const std::string kind = j.value("kind", "clique");
  if (kind == "clique") {
    t.kind = TopologySpec::Kind::Clique;
  } else if (kind == "randomGraph") {
    t.kind = TopologySpec::Kind::RandomGraph;
    t.degree = j.value("degree", 4);
  } else if (kind == "explicit") {
    t.kind = TopologySpec::Kind::Explicit;
    if (!j.contains("edges")) fail("explicit topology needs an edges array");
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() < 2 || e.size() > 3) fail("edge must be [a,b] or [a,b,latencyMs]");
      std::optional<TimeMs> lat;
      if (e.size() == 3) lat = e[2].get<TimeMs>();
      t.edges.emplace_back(e[0].get<ProcessId>(), e[1].get<ProcessId>(), lat);
    }
  } else {
    fail("unknown topology kind '" + kind + "'");
  }
  return t;
}

ScheduleAction parse_action(const json& j) {
  ScheduleAction a;
  a.at_ms = j.value("atMs", TimeMs{0});
  const std::string act = j.value("action", "");
  auto need = [&](const char* field) {
    if (!j.contains(field)) fail("schedule action '" + act + "' needs field '" + field + "'");
  };
  if (act == "broadcast") {
    a.kind = ScheduleAction::Kind::Broadcast;
    need("process");
    a.process = j.at("process").get<ProcessId>();
    a.body = j.value("body", "");
  } else if (act == "add_link" || act == "remove_link") {
    a.kind = act == "add_link" ? ScheduleAction::Kind::AddLink : ScheduleAction::Kind::RemoveLink;
    need("from");
    need("to");
    a.from = j.at("from").get<ProcessId>();
    a.to = j.at("to").get<ProcessId>();
    if (j.contains("latencyMs") && !j.at("latencyMs").is_null()) a.latency_ms = j.at("latencyMs").get<TimeMs>();
  } else if (act == "join") {
    a.kind = ScheduleAction::Kind::Join;
    need("process");
    need("contact");
    a.process = j.at("process").get<ProcessId>();
    a.contact = j.at("contact").get<ProcessId>();
  } else if (act == "leave" || act == "crash") {
    a.kind = act == "leave" ? ScheduleAction::Kind::Leave : ScheduleAction::Kind::Crash;
    need("process");
    a.process = j.at("process").get<ProcessId>();
  } else if (act == "join_random") {
    a.kind = ScheduleAction::Kind::JoinRandom;
  } else if (act == "leave_random") {
    a.kind = ScheduleAction::Kind::LeaveRandom;
  } else if (act == "add_random_link") {
    a.kind = ScheduleAction::Kind::AddRandomLink;
  } else if (act == "remove_random_link") {
    a.kind = ScheduleAction::Kind::RemoveRandomLink;
  } else if (act == "drop_pong") {
    a.kind = ScheduleAction::Kind::DropPong;
    need("process");
    a.process = j.at("process").get<ProcessId>();
    a.count = j.value("count", std::uint64_t{1});
  } else {
    fail("unknown schedule action '" + act + "'");
  }
  return a;
}

GuardParams parse_guard(const json& j) {
  GuardParams g;
  if (j.contains("maxSize") && !j.at("maxSize").is_null()) g.max_size = j.at("maxSize").get<std::uint64_t>();
  if (j.contains("maxRetry") && !j.at("maxRetry").is_null()) g.max_retry = j.at("maxRetry").get<int>();
  if (j.contains("timeoutMs") && !j.at("timeoutMs").is_null()) {
    const auto& t = j.at("timeoutMs");
    if (t.is_string()) {
      if (t.get<std::string>() != "auto") fail("guard.timeoutMs must be a number, null, or \"auto\"");
      g.timeout_auto = true;
    } else {
      g.timeout_ms = t.get<TimeMs>();
    }
  }
  return g;
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  Scenario sc;
  sc.name = j.value("name", "unnamed");
  sc.seed = j.value("seed", std::uint64_t{1});
  if (!j.contains("processCount")) fail("processCount is required");
  sc.process_count = j.at("processCount").get<std::uint32_t>();
  if (j.contains("initialTopology")) sc.initial_topology = parse_topology(j.at("initialTopology"));
  if (j.contains("dynamics")) {
    const auto& d = j.at("dynamics");
    sc.dynamics.shuffle_period_ms = d.value("shufflePeriodMs", TimeMs{0});
    sc.dynamics.shuffle_fraction = d.value("shuffleFraction", 0.5);
    if (d.contains("schedule")) {
      for (const auto& e : d.at("schedule")) sc.dynamics.schedule.push_back(parse_action(e));
    }
  }
  if (j.contains("latencyRamp")) {
    const auto& r = j.at("latencyRamp");
    sc.latency_ramp.start_ms = r.value("startMs", TimeMs{0});
    sc.latency_ramp.end_ms = r.value("endMs", TimeMs{0});
    sc.latency_ramp.ramp_duration_ms = r.value("rampDurationMs", TimeMs{0});
  }
  if (j.contains("workload")) {
    const auto& w = j.at("workload");
    sc.workload.broadcasts_per_process_per_sec = w.value("broadcastsPerProcessPerSec", 0.0);
    sc.workload.total_messages = w.value("totalMessages", std::uint64_t{0});
  }
  sc.protocol = j.value("protocol", "pc");
  if (j.contains("guard")) sc.guard = parse_guard(j.at("guard"));
  sc.allow_partition = j.value("allowPartition", false);
  sc.duration_ms = j.value("durationMs", TimeMs{60000});
  sc.metrics_interval_ms = j.value("metricsIntervalMs", TimeMs{1000});
  sc.direct_latency_ms = j.value("directLatencyMs", TimeMs{20});
  sc.path_sample_sources = j.value("pathSampleSources", std::uint32_t{16});
  sc.trace_detail = j.value("traceDetail", "full");
  if (j.contains("timeLimitMs") && !j.at("timeLimitMs").is_null())
    sc.time_limit_ms = j.at("timeLimitMs").get<TimeMs>();
  if (j.contains("sweep") && !j.at("sweep").is_null()) {
    const auto& s = j.at("sweep");
    SweepGrid g;
    if (s.contains("rampLevelsMs")) g.ramp_levels_ms = s.at("rampLevelsMs").get<std::vector<TimeMs>>();
    if (s.contains("protocols")) g.protocols = s.at("protocols").get<std::vector<std::string>>();
    if (s.contains("processCounts")) g.process_counts = s.at("processCounts").get<std::vector<std::uint32_t>>();
    g.seeds = s.value("seeds", 1);
    sc.sweep = std::move(g);
  }
  validate(sc);
  return sc;
}

void validate(const Scenario& sc) {
  if (sc.process_count < 1) fail("processCount must be at least 1");
  if (sc.protocol != "rbroadcast" && sc.protocol != "pc" && sc.protocol != "vc")
    fail("protocol must be one of rbroadcast, pc, vc");
  if (sc.trace_detail != "full" && sc.trace_detail != "payloads")
    fail("traceDetail must be 'full' or 'payloads'");
  if (sc.duration_ms < 0) fail("durationMs must be non-negative");
  if (sc.metrics_interval_ms <= 0) fail("metricsIntervalMs must be positive");
  if (sc.direct_latency_ms < 0) fail("directLatencyMs must be non-negative");
  if (sc.path_sample_sources < 1) fail("pathSampleSources must be at least 1");
  if (sc.latency_ramp.start_ms < 0 || sc.latency_ramp.end_ms < 0 || sc.latency_ramp.ramp_duration_ms < 0)
    fail("latencyRamp values must be non-negative");
  if (sc.workload.broadcasts_per_process_per_sec < 0) fail("workload rate must be non-negative");
  if (sc.dynamics.shuffle_period_ms < 0) fail("shufflePeriodMs must be non-negative");
  if (sc.initial_topology.kind == TopologySpec::Kind::RandomGraph && sc.initial_topology.degree < 1)
    fail("randomGraph degree must be at least 1");
  if (sc.initial_topology.kind == TopologySpec::Kind::Explicit) {
    std::set<std::pair<ProcessId, ProcessId>> seen;
    for (const auto& [a, b, lat] : sc.initial_topology.edges) {
      if (a >= sc.process_count || b >= sc.process_count) fail("edge endpoint out of range");
      if (a == b) fail("self-loop edge");
      if (lat && *lat < 0) fail("edge latency must be non-negative");
      auto key = std::minmax(a, b);
      if (!seen.insert(key).second) fail("duplicate edge in explicit topology");
    }
  }
  if (sc.guard.max_retry && *sc.guard.max_retry < 0) fail("guard.maxRetry must be non-negative");
  if (sc.guard.timeout_ms && *sc.guard.timeout_ms <= 0) fail("guard.timeoutMs must be positive");
  for (const auto& a : sc.dynamics.schedule) {
    if (a.at_ms < 0) fail("schedule atMs must be non-negative");
    if (a.latency_ms && *a.latency_ms < 0) fail("schedule latencyMs must be non-negative");
  }
  if (sc.sweep) {
    if (sc.sweep->seeds < 1) fail("sweep.seeds must be at least 1");
    for (const auto& p : sc.sweep->protocols)
      if (p != "rbroadcast" && p != "pc" && p != "vc") fail("sweep protocol must be one of rbroadcast, pc, vc");
    for (TimeMs l : sc.sweep->ramp_levels_ms)
      if (l < 0) fail("sweep ramp level must be non-negative");
    for (std::uint32_t n : sc.sweep->process_counts)
      if (n < 1) fail("sweep processCount must be at least 1");
  }
}

std::string scenario_to_canonical_json(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["processCount"] = sc.process_count;
  json topo;
  switch (sc.initial_topology.kind) {
    case TopologySpec::Kind::Clique: topo["kind"] = "clique"; break;
    case TopologySpec::Kind::RandomGraph:
      topo["kind"] = "randomGraph";
      topo["degree"] = sc.initial_topology.degree;
      break;
    case TopologySpec::Kind::Explicit: {
      topo["kind"] = "explicit";
      json edges = json::array();
      for (const auto& [a, b, lat] : sc.initial_topology.edges) {
        json e = json::array({a, b});
        if (lat) e.push_back(*lat);
        edges.push_back(std::move(e));
      }
      topo["edges"] = std::move(edges);
      break;
    }
  }
  j["initialTopology"] = std::move(topo);
  json dyn;
  dyn["shufflePeriodMs"] = sc.dynamics.shuffle_period_ms;
  dyn["shuffleFraction"] = sc.dynamics.shuffle_fraction;
  json sched = json::array();
  static const char* kActionNames[] = {"broadcast", "add_link", "remove_link", "join",
                                       "leave",     "crash",    "join_random", "leave_random",
                                       "add_random_link", "remove_random_link", "drop_pong"};
  for (const auto& a : sc.dynamics.schedule) {
    json e;
    e["atMs"] = a.at_ms;
    e["action"] = kActionNames[static_cast<int>(a.kind)];
    e["process"] = a.process;
    e["from"] = a.from;
    e["to"] = a.to;
    e["contact"] = a.contact;
    e["body"] = a.body;
    if (a.latency_ms) e["latencyMs"] = *a.latency_ms;
    e["count"] = a.count;
    sched.push_back(std::move(e));
  }
  dyn["schedule"] = std::move(sched);
  j["dynamics"] = std::move(dyn);
  j["latencyRamp"] = {{"startMs", sc.latency_ramp.start_ms},
                      {"endMs", sc.latency_ramp.end_ms},
                      {"rampDurationMs", sc.latency_ramp.ramp_duration_ms}};
  j["workload"] = {{"broadcastsPerProcessPerSec", sc.workload.broadcasts_per_process_per_sec},
                   {"totalMessages", sc.workload.total_messages}};
  j["protocol"] = sc.protocol;
  json guard;
  guard["maxSize"] = sc.guard.max_size ? json(*sc.guard.max_size) : json(nullptr);
  guard["maxRetry"] = sc.guard.max_retry ? json(*sc.guard.max_retry) : json(nullptr);
  if (sc.guard.timeout_auto)
    guard["timeoutMs"] = "auto";
  else
    guard["timeoutMs"] = sc.guard.timeout_ms ? json(*sc.guard.timeout_ms) : json(nullptr);
  j["guard"] = std::move(guard);
  j["allowPartition"] = sc.allow_partition;
  j["durationMs"] = sc.duration_ms;
  j["metricsIntervalMs"] = sc.metrics_interval_ms;
  j["directLatencyMs"] = sc.direct_latency_ms;
  j["pathSampleSources"] = sc.path_sample_sources;
  j["traceDetail"] = sc.trace_detail;
  if (sc.time_limit_ms) j["timeLimitMs"] = *sc.time_limit_ms;
  if (sc.sweep) {
    j["sweep"] = {{"rampLevelsMs", sc.sweep->ramp_levels_ms},
                  {"protocols", sc.sweep->protocols},
                  {"processCounts", sc.sweep->process_counts},
                  {"seeds", sc.sweep->seeds}};
  }
  return j.dump(2);
}

std::uint64_t scenario_hash(const Scenario& sc) {
  // FNV-1a over the canonical dump; stable across platforms.
  const std::string s = scenario_to_canonical_json(sc);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace causalmesh
