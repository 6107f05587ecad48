#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace causalmesh {

using ProcessId = std::uint64_t;
using TimeMs = std::int64_t;  // virtual clock, 1 ms units

/// Every event kind a run can record.
enum class Ev : std::uint8_t {
  // application-visible
  Broadcast,
  Send,
  Receive,
  Deliver,
  // topology
  AddLink,
  RemoveLink,
  Join,
  Leave,
  Crash,
  // protocol control
  LinkOpened,
  LinkSafe,
  LinkClosed,
  LinkAbandoned,
  PingSent,
  PongSent,
  PongStale,
  BufferPush,
  BufferReset,
  BufferFlushed,
  PhaseRetry,
  TimeoutFired,
  VcParked,
  VcDrained,
};

const char* ev_name(Ev kind);

/// Message kind tag on Send/Receive events.
enum class MsgKind : std::uint8_t { None = 0, Payload, Ping, Pong, VcPayload };

const char* msg_kind_name(MsgKind kind);

/**
 * @brief One recorded event. Plain data; unset fields stay zero.
 *
 * Fields are overloaded per kind: `peer` is the link's far end or the probe
 * target, (origin, counter) the message id, `aux` a phase id, buffer size or
 * pending count, `cb` the control bytes of a sent message.
 */
struct TraceEvent {
  TimeMs t = 0;
  Ev kind = Ev::Broadcast;
  MsgKind mkind = MsgKind::None;
  std::uint16_t cb = 0;
  ProcessId p = 0;
  ProcessId peer = 0;
  std::uint64_t origin = 0;
  std::uint64_t counter = 0;
  std::uint64_t aux = 0;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

/// Append-only event log of one run, in execution order.
class Trace {
 public:
  void emit(const TraceEvent& ev) { events_.push_back(ev); }
  const std::vector<TraceEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  void reserve(std::size_t n) { events_.reserve(n); }

  /// One JSON object per line, fixed key order; byte-deterministic.
  void write_jsonl(std::ostream& out) const;
  static Trace read_jsonl(std::istream& in);  // throws std::runtime_error on bad input

 private:
  std::vector<TraceEvent> events_;
};

std::string trace_event_to_json(const TraceEvent& ev);

}  // namespace causalmesh
