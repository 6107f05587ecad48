#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "causalmesh/vc_broadcast.hpp"
#include "support/mock_context.hpp"

using namespace causalmesh;
using test::MockContext;

namespace {

std::uint64_t clock_entry(const VcPayload& msg, ProcessId p) {
  for (const auto& [q, c] : msg.clock) {
    if (q == p) return c;
  }
  return 0;
}

// Componentwise strict dominance: the causal order carried by the clocks.
bool dominates(const VcPayload& a, const VcPayload& b) {
  bool strict = false;
  for (const auto& [p, c] : a.clock) {
    std::uint64_t other = clock_entry(b, p);
    if (c > other) return false;
  }
  for (const auto& [p, c] : b.clock) {
    if (clock_entry(a, p) < c) strict = true;
  }
  return strict;
}

}  // namespace

TEST_CASE("first broadcast carries clock {self: 1}") {
  MockContext ctx;
  VectorClockBroadcast vc(3, &ctx);
  vc.on_open(1, true);
  vc.broadcast("m");
  REQUIRE(ctx.sends.size() == 1);
  const VcPayload& msg = std::get<VcPayload>(ctx.sends[0].msg);
  REQUIRE(msg.clock.size() == 1);
  CHECK(msg.clock[0] == std::pair<ProcessId, std::uint64_t>{3, 1});
  CHECK(ctx.delivered.size() == 1);
}

TEST_CASE("clock size grows with the set of observed broadcasters") {
  MockContext ctx;
  VectorClockBroadcast vc(9, &ctx);
  vc.on_open(1, true);
  for (ProcessId origin = 1; origin <= 5; ++origin) {
    VcPayload in{{origin, 1}, "m", {{origin, 1}}};
    vc.on_message(1, in);
  }
  ctx.clear();
  vc.broadcast("mine");
  const VcPayload& out = std::get<VcPayload>(ctx.sends[0].msg);
  CHECK(out.clock.size() == 6);  // five observed origins plus self
  CHECK(control_size(ProtocolMessage{out}) == 17 + 16 * 6);
}

TEST_CASE("ready messages deliver immediately, early ones park") {
  MockContext ctx;
  VectorClockBroadcast vc(2, &ctx);
  vc.on_open(1, true);

  // (A,2) depends on (A,1): parked.
  vc.on_message(1, VcPayload{{7, 2}, "second", {{7, 2}}});
  CHECK(ctx.delivered.empty());
  CHECK(vc.pending_count() == 1);
  CHECK(ctx.count_notes(Ev::VcParked) == 1);

  // (A,1) arrives: both deliver, in order.
  vc.on_message(1, VcPayload{{7, 1}, "first", {{7, 1}}});
  REQUIRE(ctx.delivered.size() == 2);
  CHECK(ctx.delivered[0].id == MessageId{7, 1});
  CHECK(ctx.delivered[1].id == MessageId{7, 2});
  CHECK(vc.pending_count() == 0);
  CHECK(ctx.count_notes(Ev::VcDrained) == 1);
}

TEST_CASE("forwards happen on receipt even when delivery parks") {
  MockContext ctx;
  VectorClockBroadcast vc(2, &ctx);
  vc.on_open(1, true);
  vc.on_open(3, true);
  vc.on_message(1, VcPayload{{7, 2}, "m", {{7, 2}}});
  CHECK(ctx.count_sends(MsgKind::VcPayload) == 2);
  CHECK(ctx.delivered.empty());
}

TEST_CASE("duplicates are dropped before any ordering work") {
  MockContext ctx;
  VectorClockBroadcast vc(2, &ctx);
  vc.on_open(1, true);
  VcPayload m{{7, 1}, "m", {{7, 1}}};
  vc.on_message(1, m);
  ctx.clear();
  vc.on_message(1, m);
  CHECK(ctx.sends.empty());
  CHECK(ctx.delivered.empty());
}

TEST_CASE("any arrival order yields a linear extension of clock dominance") {
  // Three origins, two causally chained messages each; chains cross via the
  // clocks below. Receiver sees every permutation class via random shuffles.
  std::vector<VcPayload> msgs = {
      {{10, 1}, "a1", {{10, 1}}},
      {{10, 2}, "a2", {{10, 2}, {11, 1}}},          // saw b1
      {{11, 1}, "b1", {{11, 1}}},
      {{11, 2}, "b2", {{10, 1}, {11, 2}}},          // saw a1
      {{12, 1}, "c1", {{10, 2}, {11, 1}, {12, 1}}}, // saw a2 (hence b1)
      {{12, 2}, "c2", {{10, 2}, {11, 2}, {12, 2}}},
  };
  std::mt19937_64 rng(11);
  for (int round = 0; round < 100; ++round) {
    std::vector<VcPayload> order = msgs;
    std::shuffle(order.begin(), order.end(), rng);
    MockContext ctx;
    VectorClockBroadcast vc(2, &ctx);
    vc.on_open(1, true);
    for (const VcPayload& m : order) vc.on_message(1, m);

    REQUIRE(ctx.delivered.size() == msgs.size());  // pending drained
    CHECK(vc.pending_count() == 0);
    for (std::size_t i = 0; i < ctx.delivered.size(); ++i) {
      for (std::size_t j = i + 1; j < ctx.delivered.size(); ++j) {
        auto find = [&](const MessageId& id) {
          return *std::find_if(msgs.begin(), msgs.end(),
                               [&](const VcPayload& m) { return m.id == id; });
        };
        // Nothing delivered later may causally precede something earlier.
        CHECK_FALSE(dominates(find(ctx.delivered[j].id), find(ctx.delivered[i].id)));
      }
    }
  }
}

TEST_CASE("pending scans are instrumented") {
  MockContext ctx;
  VectorClockBroadcast vc(2, &ctx);
  vc.on_open(1, true);
  // Park a long suffix, then release it with the head: the drain scans grow.
  for (std::uint64_t c = 10; c >= 2; --c) {
    vc.on_message(1, VcPayload{{7, c}, "m", {{7, c}}});
  }
  CHECK(vc.pending_count() == 9);
  std::uint64_t before = vc.delivery_stats().scan_touches;
  vc.on_message(1, VcPayload{{7, 1}, "m", {{7, 1}}});
  CHECK(vc.pending_count() == 0);
  CHECK(vc.delivery_stats().scan_touches - before > 9);
  CHECK(vc.delivery_stats().max_scan_single > 9);
}
