#include "causalmesh/causal_oracle.hpp"

#include <deque>
#include <map>
#include <set>

#include <json.hpp>

namespace causalmesh {

namespace {

constexpr std::size_t kListingCap = 200;

struct SendRec {
  MessageId id;
  std::size_t sender_prefix = 0;  // sender deliveries strictly before this message's own delivery
  bool sent_safe = false;
};

struct LinkState {
  bool safe = false;                   // sender currently flags this direction safe
  std::deque<SendRec> in_flight;
  std::size_t checked_deliveries = 0;  // safe-contract prefix already verified
};

struct PState {
  std::map<ProcessId, std::uint64_t> vc;        // oracle clock
  std::map<ProcessId, std::uint64_t> max_seen;  // max clock component over deliveries
  std::vector<MessageId> delivered;
  std::map<MessageId, std::size_t> admitted_pos;  // delivery count at first receipt/broadcast
  std::map<MessageId, std::uint32_t> delivered_times;
  std::map<MessageId, std::size_t> first_had;   // receive pos; own broadcasts count
};

struct MsgInfo {
  std::size_t broadcast_pos = 0;
  std::map<ProcessId, std::uint64_t> clock;  // Fidge-Mattern snapshot at broadcast
};

std::uint64_t clock_component(const MsgInfo& m, ProcessId origin) {
  auto it = m.clock.find(origin);
  return it == m.clock.end() ? 0 : it->second;
}

nlohmann::json id_json(const MessageId& id) {
  return nlohmann::json{{"origin", id.origin}, {"counter", id.counter}};
}

}  // namespace

Verdict verify(const Trace& trace) {
  Verdict v;
  std::map<ProcessId, PState> procs;
  std::map<MessageId, MsgInfo> msgs;
  std::map<std::pair<ProcessId, ProcessId>, LinkState> links;  // directed
  std::map<ProcessId, std::set<ProcessId>> peers;
  std::map<ProcessId, std::size_t> join_pos;
  std::set<ProcessId> departed;

  auto structural = [&](std::size_t pos, const std::string& what) {
    if (v.structural_errors.size() < kListingCap)
      v.structural_errors.push_back("event " + std::to_string(pos) + ": " + what);
  };

  const auto& events = trace.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& e = events[i];
    switch (e.kind) {
      case Ev::Join:
        join_pos.emplace(e.p, i);
        procs.try_emplace(e.p);
        break;
      case Ev::Leave:
      case Ev::Crash:
        departed.insert(e.p);
        if (e.kind == Ev::Crash) {
          // All of the crashed process's links stop being safe in both
          // directions; nothing in flight on them will be received.
          for (ProcessId q : peers[e.p]) {
            links[{e.p, q}].safe = false;
            links[{q, e.p}].safe = false;
          }
        }
        break;
      case Ev::AddLink:
        peers[e.p].insert(e.peer);
        peers[e.peer].insert(e.p);
        break;
      case Ev::RemoveLink:
        links[{e.p, e.peer}].safe = false;
        links[{e.peer, e.p}].safe = false;
        peers[e.p].erase(e.peer);
        peers[e.peer].erase(e.p);
        break;
      case Ev::LinkSafe:
        links[{e.p, e.peer}].safe = true;
        break;
      case Ev::LinkClosed:
      case Ev::LinkAbandoned:
        links[{e.p, e.peer}].safe = false;
        break;
      case Ev::Broadcast: {
        const MessageId id{e.origin, e.counter};
        PState& s = procs[e.p];
        ++s.vc[e.p];
        if (s.vc[e.p] != e.counter) {
          structural(i, "broadcast counter out of sequence");
          s.vc[e.p] = e.counter;
        }
        if (!msgs.try_emplace(id, MsgInfo{i, s.vc}).second)
          structural(i, "message id broadcast twice");
        s.first_had.emplace(id, i);  // the origin trivially has its own message
        s.admitted_pos.emplace(id, s.delivered.size());
        break;
      }
      case Ev::Send: {
        if (e.mkind != MsgKind::Payload && e.mkind != MsgKind::VcPayload) break;
        if (e.aux != 0) break;  // direct channel, not a link
        PState& s = procs[e.p];
        LinkState& l = links[{e.p, e.peer}];
        const MessageId id{e.origin, e.counter};
        // The safe-link contract is anchored where the message entered the
        // sender's outbound stream: its delivery count at first receipt (or
        // broadcast). A buffered message flushed late only owes the receiver
        // what the sender had delivered before admitting it, even when the
        // sender forwarded it without delivering it (a join-horizon
        // straggler): deliveries made while it sat in the buffer ride the
        // same flush right behind it.
        auto ap = s.admitted_pos.find(id);
        const std::size_t prefix = ap == s.admitted_pos.end() ? s.delivered.size() : ap->second;
        l.in_flight.push_back({id, prefix, l.safe});
        break;
      }
      case Ev::Receive: {
        if (e.mkind != MsgKind::Payload && e.mkind != MsgKind::VcPayload) break;
        if (e.aux != 0) break;
        const MessageId id{e.origin, e.counter};
        PState& s = procs[e.p];
        LinkState& l = links[{e.peer, e.p}];
        if (l.in_flight.empty()) {
          structural(i, "receive without a matching send on the link");
        } else {
          SendRec rec = l.in_flight.front();
          if (rec.id != id) {
            structural(i, "link delivered out of FIFO order");
            l.in_flight.pop_front();
          } else {
            l.in_flight.pop_front();
            if (rec.sent_safe) {
              // Safe-link contract: everything the sender delivered before
              // delivering this message must already be at the receiver.
              // Earlier receives verified a prefix; only the new slice needs
              // checking. Messages broadcast before the receiver's join line
              // are exempt: a late joiner is only accountable from its join
              // onward.
              const PState& sender = procs[e.peer];
              auto jit = join_pos.find(e.p);
              const std::size_t joined_at = jit == join_pos.end() ? 0 : jit->second;
              for (std::size_t d = l.checked_deliveries;
                   d < rec.sender_prefix && d < sender.delivered.size(); ++d) {
                const MessageId& m = sender.delivered[d];
                auto mi = msgs.find(m);
                if (mi != msgs.end() && mi->second.broadcast_pos < joined_at) continue;
                if (!s.first_had.count(m)) {
                  ++v.breach_count;
                  if (v.breaches.size() < kListingCap)
                    v.breaches.push_back({e.peer, e.p, id, m});
                }
              }
              if (l.checked_deliveries < rec.sender_prefix)
                l.checked_deliveries = rec.sender_prefix;
            }
          }
        }
        s.first_had.emplace(id, i);
        s.admitted_pos.emplace(id, s.delivered.size());
        break;
      }
      case Ev::Deliver: {
        const MessageId id{e.origin, e.counter};
        PState& s = procs[e.p];
        const std::uint32_t times = ++s.delivered_times[id];
        if (times > 1) {
          ++v.duplicate_count;
          if (v.duplicates.size() < kListingCap) v.duplicates.push_back({e.p, id});
          break;  // only the first delivery participates in ordering
        }
        if (!s.first_had.count(id)) structural(i, "deliver without receiving the message");
        auto mit = msgs.find(id);
        if (mit == msgs.end()) {
          structural(i, "deliver of a message never broadcast");
          break;
        }
        const MsgInfo& info = mit->second;
        // Violation: some earlier-delivered m' causally follows this id,
        // i.e. clock(m')[id.origin] >= id.counter.
        auto ms = s.max_seen.find(id.origin);
        if (ms != s.max_seen.end() && ms->second >= id.counter) {
          for (const MessageId& prev : s.delivered) {
            if (clock_component(msgs.at(prev), id.origin) >= id.counter) {
              ++v.violation_count;
              if (v.violations.size() < kListingCap) v.violations.push_back({e.p, id, prev});
            }
          }
        }
        for (const auto& [o, c] : info.clock) {
          auto& seen = s.max_seen[o];
          if (c > seen) seen = c;
          auto& local = s.vc[o];
          if (c > local) local = c;  // merge into the oracle clock
        }
        s.delivered.push_back(id);
        break;
      }
      default:
        break;  // control notes don't affect the checks above
    }
  }

  // Completeness: a process alive at the end owes a delivery for every
  // message broadcast after its join line.
  for (const auto& [pid, s] : procs) {
    if (departed.count(pid)) continue;
    auto jit = join_pos.find(pid);
    const std::size_t joined_at = jit == join_pos.end() ? 0 : jit->second;
    for (const auto& [id, info] : msgs) {
      if (info.broadcast_pos < joined_at) continue;
      if (!s.delivered_times.count(id)) {
        ++v.missing_count;
        if (v.missing.size() < kListingCap) v.missing.push_back({pid, id});
      }
    }
  }
  return v;
}

std::string Verdict::to_json() const {
  nlohmann::json j;
  j["clean"] = clean();
  j["violationCount"] = violation_count;
  j["duplicateCount"] = duplicate_count;
  j["missingCount"] = missing_count;
  j["breachCount"] = breach_count;
  nlohmann::json viol = nlohmann::json::array();
  for (const auto& x : violations)
    viol.push_back({{"process", x.process},
                    {"predecessor", id_json(x.predecessor)},
                    {"outOfOrder", id_json(x.out_of_order)}});
  j["violations"] = std::move(viol);
  nlohmann::json dups = nlohmann::json::array();
  for (const auto& x : duplicates) dups.push_back({{"process", x.process}, {"id", id_json(x.id)}});
  j["duplicates"] = std::move(dups);
  nlohmann::json miss = nlohmann::json::array();
  for (const auto& x : missing) miss.push_back({{"process", x.process}, {"id", id_json(x.id)}});
  j["missing"] = std::move(miss);
  nlohmann::json brs = nlohmann::json::array();
  for (const auto& x : breaches)
    brs.push_back({{"from", x.from},
                   {"to", x.to},
                   {"carried", id_json(x.carried)},
                   {"missing", id_json(x.missing)}});
  j["breaches"] = std::move(brs);
  j["structuralErrors"] = structural_errors;
  return j.dump(2);
}

}  // namespace causalmesh
