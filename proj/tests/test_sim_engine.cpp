#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <string>

#include "causalmesh/causal_oracle.hpp"
#include "causalmesh/metrics.hpp"
#include "causalmesh/scenario.hpp"
#include "causalmesh/scenario_library.hpp"
#include "causalmesh/sim_engine.hpp"

using namespace causalmesh;

namespace {

Scenario bundled(const std::string& name, const std::string& protocol = "") {
  const std::string* text = find_bundled_scenario(name);
  REQUIRE(text != nullptr);
  Scenario sc = scenario_from_json(*text);
  if (!protocol.empty()) sc.protocol = protocol;
  return sc;
}

std::size_t count_kind(const Trace& t, Ev kind) {
  return static_cast<std::size_t>(
      std::count_if(t.events().begin(), t.events().end(),
                    [&](const TraceEvent& e) { return e.kind == kind; }));
}

ScheduleAction at(TimeMs when, ScheduleAction::Kind kind) {
  ScheduleAction a;
  a.at_ms = when;
  a.kind = kind;
  return a;
}

// 0 --500ms-- 1 --10ms-- 2, no workload, full tracing.
Scenario line3() {
  Scenario sc;
  sc.name = "line3";
  sc.process_count = 3;
  sc.initial_topology.kind = TopologySpec::Kind::Explicit;
  sc.initial_topology.edges.emplace_back(0, 1, TimeMs{500});
  sc.initial_topology.edges.emplace_back(1, 2, TimeMs{10});
  sc.duration_ms = 5000;
  sc.metrics_interval_ms = 5000;
  sc.path_sample_sources = 3;
  return sc;
}

std::string trace_bytes(const Trace& t) {
  std::ostringstream os;
  t.write_jsonl(os);
  return os.str();
}

std::string csv_bytes(const MetricsReport& r) {
  std::ostringstream os;
  write_csv_header(os);
  write_csv_rows(os, r);
  return os.str();
}

}  // namespace

TEST_CASE("flooding delivers a reply before its cause; preventive and clock protocols do not") {
  const RunResult rb = run_simulation(bundled("fig2_violation", "rbroadcast"));
  const Verdict vrb = verify(rb.trace);
  CHECK(vrb.violation_count == 1);
  REQUIRE(vrb.violations.size() == 1);
  CHECK(vrb.violations[0] == CausalViolation{2, MessageId{0, 1}, MessageId{0, 2}});

  for (const char* proto : {"pc", "vc"}) {
    const RunResult r = run_simulation(bundled("fig2_violation", proto));
    const Verdict v = verify(r.trace);
    CHECK(v.violation_count == 0);
    CHECK(v.clean());
  }
}

TEST_CASE("identical scenarios produce byte-identical traces and metrics") {
  Scenario sc;
  sc.name = "repeat";
  sc.seed = 42;
  sc.process_count = 12;
  sc.initial_topology.kind = TopologySpec::Kind::RandomGraph;
  sc.initial_topology.degree = 3;
  sc.duration_ms = 12000;
  sc.metrics_interval_ms = 3000;
  sc.dynamics.shuffle_period_ms = 4000;
  sc.dynamics.schedule.push_back(at(2000, ScheduleAction::Kind::JoinRandom));
  sc.dynamics.schedule.push_back(at(5000, ScheduleAction::Kind::AddRandomLink));
  sc.latency_ramp = {100, 2000, 10000};
  sc.workload.broadcasts_per_process_per_sec = 0.2;
  sc.workload.total_messages = 10;
  sc.path_sample_sources = 6;

  const RunResult a = run_simulation(sc);
  const RunResult b = run_simulation(sc);
  CHECK(trace_bytes(a.trace) == trace_bytes(b.trace));
  CHECK(csv_bytes(a.metrics) == csv_bytes(b.metrics));
  CHECK(a.counters.events_processed == b.counters.events_processed);

  // A different seed reshapes the run.
  sc.seed = 43;
  const RunResult c = run_simulation(sc);
  CHECK(trace_bytes(a.trace) != trace_bytes(c.trace));
}

TEST_CASE("link FIFO holds while latency ramps, and the run stays clean") {
  Scenario sc;
  sc.name = "ramp";
  sc.seed = 9;
  sc.process_count = 8;
  sc.initial_topology.kind = TopologySpec::Kind::RandomGraph;
  sc.initial_topology.degree = 3;
  sc.duration_ms = 20000;
  sc.metrics_interval_ms = 5000;
  sc.latency_ramp = {10, 3000, 15000};
  sc.workload.broadcasts_per_process_per_sec = 0.3;
  sc.workload.total_messages = 20;
  sc.path_sample_sources = 8;

  const RunResult r = run_simulation(sc);
  CHECK(r.quiescent);
  const Verdict v = verify(r.trace);
  CHECK(v.structural_errors.empty());  // includes per-link FIFO
  CHECK(v.clean());
}

TEST_CASE("graceful leave still delivers traffic already in flight") {
  Scenario sc = line3();
  ScheduleAction b = at(100, ScheduleAction::Kind::Broadcast);
  b.process = 0;
  b.body = "x";
  sc.dynamics.schedule.push_back(b);
  ScheduleAction l = at(200, ScheduleAction::Kind::Leave);
  l.process = 0;
  sc.dynamics.schedule.push_back(l);

  const RunResult r = run_simulation(sc);
  const auto& evs = r.trace.events();
  const bool received = std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
    return e.kind == Ev::Receive && e.p == 1 && e.origin == 0 && e.counter == 1;
  });
  CHECK(received);  // the 500 ms hop outlives the sender
  CHECK(verify(r.trace).clean());
  CHECK(r.counters.deliveries == 3);  // origin plus both survivors
}

TEST_CASE("crash drops traffic in flight on its links") {
  Scenario sc = line3();
  ScheduleAction b = at(100, ScheduleAction::Kind::Broadcast);
  b.process = 0;
  b.body = "x";
  sc.dynamics.schedule.push_back(b);
  ScheduleAction c = at(200, ScheduleAction::Kind::Crash);
  c.process = 0;
  sc.dynamics.schedule.push_back(c);

  const RunResult r = run_simulation(sc);
  const auto& evs = r.trace.events();
  const bool any_receive = std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
    return e.kind == Ev::Receive && e.mkind == MsgKind::Payload;
  });
  CHECK(!any_receive);
  const Verdict v = verify(r.trace);
  CHECK(v.missing_count == 2);  // the survivors can never recover the message
  CHECK(v.structural_errors.empty());
}

TEST_CASE("a joiner's bootstrap link is safe at both ends and it participates fully") {
  Scenario sc;
  sc.name = "join";
  sc.seed = 5;
  sc.process_count = 3;
  sc.initial_topology.kind = TopologySpec::Kind::Clique;
  sc.duration_ms = 5000;
  sc.metrics_interval_ms = 5000;
  sc.path_sample_sources = 4;
  ScheduleAction j = at(500, ScheduleAction::Kind::Join);
  j.process = 7;
  j.contact = 1;
  sc.dynamics.schedule.push_back(j);
  ScheduleAction b1 = at(1000, ScheduleAction::Kind::Broadcast);
  b1.process = 7;
  b1.body = "from-joiner";
  sc.dynamics.schedule.push_back(b1);
  ScheduleAction b2 = at(1500, ScheduleAction::Kind::Broadcast);
  b2.process = 0;
  b2.body = "to-joiner";
  sc.dynamics.schedule.push_back(b2);

  const RunResult r = run_simulation(sc);
  const auto& evs = r.trace.events();
  CHECK(std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
    return e.kind == Ev::Join && e.p == 7 && e.peer == 1;
  }));
  CHECK(std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
    return e.kind == Ev::LinkSafe && e.p == 7 && e.peer == 1;
  }));
  CHECK(std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
    return e.kind == Ev::LinkSafe && e.p == 1 && e.peer == 7;
  }));
  CHECK(verify(r.trace).clean());
  CHECK(r.counters.deliveries == 8);  // 2 broadcasts x 4 processes
}

TEST_CASE("a joiner delivers post-join traffic under every protocol") {
  // The clock protocol is the interesting one: without adopting the contact's
  // clock at join, a message whose clock references pre-join history parks
  // forever and the run never drains.
  for (const char* proto : {"rbroadcast", "pc", "vc"}) {
    Scenario sc;
    sc.name = "join-continuity";
    sc.seed = 4;
    sc.protocol = proto;
    sc.process_count = 2;
    sc.initial_topology.kind = TopologySpec::Kind::Explicit;
    sc.initial_topology.edges.emplace_back(0, 1, 10);
    sc.duration_ms = 4000;
    sc.metrics_interval_ms = 4000;
    sc.path_sample_sources = 2;
    sc.trace_detail = "full";
    ScheduleAction b1 = at(0, ScheduleAction::Kind::Broadcast);
    b1.process = 0;
    b1.body = "before";
    sc.dynamics.schedule.push_back(b1);
    ScheduleAction j = at(500, ScheduleAction::Kind::Join);
    j.process = 5;
    j.contact = 1;
    sc.dynamics.schedule.push_back(j);
    ScheduleAction b2 = at(1000, ScheduleAction::Kind::Broadcast);
    b2.process = 0;
    b2.body = "after";
    sc.dynamics.schedule.push_back(b2);

    const RunResult r = run_simulation(sc);
    INFO(proto);
    CHECK(r.quiescent);
    CHECK(r.counters.deliveries == 5);  // "before" x {0,1}, "after" x {0,1,5}
    CHECK(verify(r.trace).clean());
  }
}

TEST_CASE("a pre-join straggler reaching the joiner later is forwarded but not delivered") {
  // (0,1) crawls to process 1 over a 5s link while process 9 joins at 2, which
  // already has it. When the copy finally funnels to 9, the join horizon
  // suppresses delivery: 9 may already have delivered successors of it.
  auto straggler = [](const char* proto) {
    Scenario sc;
    sc.name = "join-straggler";
    sc.seed = 6;
    sc.protocol = proto;
    sc.process_count = 3;
    sc.initial_topology.kind = TopologySpec::Kind::Explicit;
    sc.initial_topology.edges.emplace_back(0, 1, 5000);
    sc.initial_topology.edges.emplace_back(0, 2, 10);
    sc.duration_ms = 8000;
    sc.metrics_interval_ms = 8000;
    sc.path_sample_sources = 2;
    sc.trace_detail = "full";
    ScheduleAction b1 = at(0, ScheduleAction::Kind::Broadcast);
    b1.process = 0;
    b1.body = "slow";
    sc.dynamics.schedule.push_back(b1);
    ScheduleAction j = at(100, ScheduleAction::Kind::Join);
    j.process = 9;
    j.contact = 2;
    sc.dynamics.schedule.push_back(j);
    ScheduleAction l = at(200, ScheduleAction::Kind::AddLink);
    l.from = 1;
    l.to = 9;
    l.latency_ms = 10;
    sc.dynamics.schedule.push_back(l);
    ScheduleAction b2 = at(300, ScheduleAction::Kind::Broadcast);
    b2.process = 0;
    b2.body = "next";
    sc.dynamics.schedule.push_back(b2);
    return run_simulation(sc);
  };

  for (const char* proto : {"pc", "rbroadcast"}) {
    const RunResult r = straggler(proto);
    INFO(proto);
    CHECK(r.quiescent);
    const auto& evs = r.trace.events();
    CHECK(std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
      return e.kind == Ev::Receive && e.p == 9 && e.origin == 0 && e.counter == 1;
    }));
    CHECK(std::none_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
      return e.kind == Ev::Deliver && e.p == 9 && e.origin == 0 && e.counter == 1;
    }));
    CHECK(std::any_of(evs.begin(), evs.end(), [](const TraceEvent& e) {
      return e.kind == Ev::Deliver && e.p == 9 && e.origin == 0 && e.counter == 2;
    }));
    CHECK(r.counters.deliveries == 7);
  }
  // The preventive run is fully clean; the raw flood inverts order at 1, which
  // receives "next" through 9 long before "slow" lands.
  CHECK(verify(straggler("pc").trace).clean());
  const Verdict vr = verify(straggler("rbroadcast").trace);
  CHECK(vr.violation_count == 1);
  REQUIRE(vr.violations.size() == 1);
  CHECK(vr.violations[0].process == 1);
}

TEST_CASE("workload stops at the configured message total") {
  Scenario sc;
  sc.name = "workload";
  sc.seed = 3;
  sc.process_count = 4;
  sc.initial_topology.kind = TopologySpec::Kind::Clique;
  sc.duration_ms = 10000;
  sc.metrics_interval_ms = 10000;
  sc.workload.broadcasts_per_process_per_sec = 5.0;
  sc.workload.total_messages = 9;
  sc.path_sample_sources = 4;

  const RunResult r = run_simulation(sc);
  CHECK(r.counters.broadcasts == 9);
  CHECK(r.counters.deliveries == 36);
  CHECK(verify(r.trace).clean());
}

TEST_CASE("partitioning actions are rejected unless explicitly allowed") {
  Scenario sc = line3();
  ScheduleAction rm = at(100, ScheduleAction::Kind::RemoveLink);
  rm.from = 0;
  rm.to = 1;
  sc.dynamics.schedule.push_back(rm);
  CHECK_THROWS_AS(run_simulation(sc), ScenarioError);

  sc.allow_partition = true;
  const RunResult r = run_simulation(sc);
  CHECK(count_kind(r.trace, Ev::RemoveLink) == 1);
}

TEST_CASE("a time limit interrupts a run that cannot drain in time") {
  Scenario sc = bundled("fig2_violation", "pc");
  sc.time_limit_ms = 1;
  const RunResult r = run_simulation(sc);
  CHECK(!r.quiescent);
  CHECK(r.outcome == "time_limit_exceeded");
}

TEST_CASE("bounded buffers reset, re-probe, discard the stale pong, then flush") {
  const RunResult r = run_simulation(bundled("fig5_bounded_buffers"));
  const Trace& t = r.trace;
  CHECK(count_kind(t, Ev::PhaseRetry) == 2);
  CHECK(count_kind(t, Ev::BufferReset) == 2);
  CHECK(count_kind(t, Ev::PongStale) == 2);
  CHECK(count_kind(t, Ev::BufferFlushed) == 2);
  CHECK(count_kind(t, Ev::PingSent) == 4);  // both sides probe twice
  for (const TraceEvent& e : t.events())
    if (e.kind == Ev::BufferPush) CHECK(e.aux <= 2);  // never past maxSize
  CHECK(verify(t).clean());
  CHECK(r.quiescent);
}

TEST_CASE("a crashed probe target is retried maxRetry times and abandoned") {
  const RunResult r = run_simulation(bundled("fig3_failures"));
  const Trace& t = r.trace;
  std::size_t probe_pings = 0;
  for (const TraceEvent& e : t.events())
    if (e.kind == Ev::PingSent && e.p == 0 && e.peer == 2) ++probe_pings;
  CHECK(probe_pings == 4);  // initial phase plus three retries
  CHECK(r.counters.retries == 3);
  CHECK(r.counters.timeouts_fired == 4);
  CHECK(r.counters.abandoned_links == 1);
  CHECK(std::any_of(t.events().begin(), t.events().end(), [](const TraceEvent& e) {
    return e.kind == Ev::LinkAbandoned && e.p == 0 && e.peer == 2 && e.aux == 4;
  }));
  CHECK(count_kind(t, Ev::LinkClosed) == 1);
  CHECK(count_kind(t, Ev::BufferPush) == 0);  // nothing leaks into the dead phase
  CHECK(verify(t).clean());
  CHECK(r.quiescent);
}

TEST_CASE("reduced trace detail drops probe hops but stays verifiable") {
  Scenario sc = bundled("fig5_bounded_buffers");
  sc.trace_detail = "payloads";
  const RunResult r = run_simulation(sc);
  for (const TraceEvent& e : r.trace.events()) {
    CHECK(e.mkind != MsgKind::Ping);
    CHECK(e.mkind != MsgKind::Pong);
  }
  CHECK(verify(r.trace).clean());
}

TEST_CASE("per-run delivery stats aggregate over processes") {
  const RunResult r = run_simulation(bundled("fig2_violation", "pc"));
  CHECK(r.delivery.payload_receives > 0);
  CHECK(r.delivery.scan_touches == r.delivery.payload_receives);
  CHECK(r.delivery.max_scan_single == 1);
}
