#include <doctest.h>

#include <map>
#include <sstream>
#include <vector>

#include "causalmesh/metrics.hpp"

using namespace causalmesh;

namespace {

using Adj = std::map<ProcessId, std::vector<ProcessId>>;

Adj symmetric(std::initializer_list<std::pair<ProcessId, ProcessId>> edges) {
  Adj adj;
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

const std::vector<ProcessId> kFour{0, 1, 2, 3};

}  // namespace

TEST_CASE("four-cycle averages 4/3 hops") {
  const Adj cycle = symmetric({{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  CHECK(avg_shortest_path(cycle, kFour, kFour) == doctest::Approx(4.0 / 3.0));
  // A subset of sources sees the same symmetric picture.
  CHECK(avg_shortest_path(cycle, {0, 2}, kFour) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("clique averages exactly one hop") {
  const Adj k4 = symmetric({{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(avg_shortest_path(k4, kFour, kFour) == 1.0);
}

TEST_CASE("unreachable nodes cost the node count") {
  const Adj split = symmetric({{0, 1}, {2, 3}});
  // From 0: one hop to 1, penalty 4 for each of 2 and 3.
  CHECK(avg_shortest_path(split, {0}, kFour) == doctest::Approx(3.0));
}

TEST_CASE("dropping edges never lowers the mean") {
  const Adj cycle = symmetric({{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  const Adj path = symmetric({{0, 1}, {1, 2}, {2, 3}});
  const Adj sparse = symmetric({{0, 1}});
  const double full = avg_shortest_path(cycle, kFour, kFour);
  const double chain = avg_shortest_path(path, kFour, kFour);
  const double torn = avg_shortest_path(sparse, kFour, kFour);
  CHECK(chain >= full);
  CHECK(torn >= chain);
}

TEST_CASE("degenerate graphs yield zero") {
  CHECK(avg_shortest_path({}, {}, {}) == 0.0);
  CHECK(avg_shortest_path({}, {7}, {7}) == 0.0);
}

TEST_CASE("csv output is byte-exact") {
  MetricsReport r;
  r.protocol = "pc";
  r.n_processes = 3;
  r.violations = 1;
  r.duplicates = 2;
  r.abandoned_links = 3;
  r.ping_phases = 4;
  r.retries = 5;
  MetricsRow row;
  row.time_ms = 1000;
  row.ramp_factor = 5000;
  row.avg_sp_safe = 1.5;
  row.avg_sp_all = 1.25;
  row.avg_unsafe_links = 0.5;
  row.avg_buffer = 2.0;
  row.max_buffer = 3;
  row.ctrl_bytes_payload = 17.0;
  row.vc_pending = 0.0;
  r.rows.push_back(row);

  std::ostringstream os;
  write_csv_header(os);
  write_csv_rows(os, r);
  CHECK(os.str() ==
        "time_ms,protocol,n_processes,ramp_factor,avg_sp_safe,avg_sp_all,avg_unsafe_links,"
        "avg_buffer,max_buffer,ctrl_bytes_payload,vc_pending,violations,duplicates,"
        "abandoned_links,ping_phases,retries\n"
        "1000,pc,3,5000,1.500000,1.250000,0.500000,2.000000,3,17.000000,0.000000,1,2,3,4,5\n");
}

TEST_CASE("overhead stats cover payload-class sends only") {
  Trace t;
  auto send = [&](MsgKind mk, std::uint16_t cb) {
    TraceEvent e;
    e.kind = Ev::Send;
    e.mkind = mk;
    e.cb = cb;
    t.emit(e);
  };
  send(MsgKind::Payload, 17);
  send(MsgKind::Ping, 25);  // control traffic is not part of the distribution
  send(MsgKind::Payload, 17);
  send(MsgKind::VcPayload, 33);
  TraceEvent rx;
  rx.kind = Ev::Receive;
  rx.mkind = MsgKind::Payload;
  rx.cb = 17;
  t.emit(rx);  // receives don't count either

  const OverheadStats st = overhead_from_trace(t);
  CHECK(st.count == 3);
  CHECK(st.min_bytes == 17);
  CHECK(st.max_bytes == 33);
  CHECK(st.mean_bytes == doctest::Approx(67.0 / 3.0));
}

TEST_CASE("empty trace yields zeroed overhead stats") {
  const OverheadStats st = overhead_from_trace(Trace{});
  CHECK(st.count == 0);
  CHECK(st.mean_bytes == 0.0);
}
