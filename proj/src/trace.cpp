#include "causalmesh/trace.hpp"

#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace causalmesh {

namespace {

constexpr std::array<const char*, 23> kEvNames = {
    "broadcast",   "send",        "receive",      "deliver",
    "add_link",    "remove_link", "join",         "leave",
    "crash",       "link_opened", "link_safe",    "link_closed",
    "link_abandoned", "ping_sent", "pong_sent",   "pong_stale",
    "buffer_push", "buffer_reset", "buffer_flushed", "phase_retry",
    "timeout_fired", "vc_parked", "vc_drained",
};

constexpr std::array<const char*, 5> kMsgKindNames = {
    "none", "payload", "ping", "pong", "vc",
};

}  // namespace

const char* ev_name(Ev kind) { return kEvNames[static_cast<std::size_t>(kind)]; }

const char* msg_kind_name(MsgKind kind) {
  return kMsgKindNames[static_cast<std::size_t>(kind)];
}

std::string trace_event_to_json(const TraceEvent& ev) {
  char buf[256];
  int n = std::snprintf(
      buf, sizeof(buf),
      "{\"t\":%lld,\"k\":\"%s\",\"p\":%llu,\"peer\":%llu,\"mk\":\"%s\","
      "\"o\":%llu,\"c\":%llu,\"aux\":%llu,\"cb\":%u}",
      static_cast<long long>(ev.t), ev_name(ev.kind),
      static_cast<unsigned long long>(ev.p),
      static_cast<unsigned long long>(ev.peer), msg_kind_name(ev.mkind),
      static_cast<unsigned long long>(ev.origin),
      static_cast<unsigned long long>(ev.counter),
      static_cast<unsigned long long>(ev.aux), ev.cb);
  return std::string(buf, static_cast<std::size_t>(n));
}

void Trace::write_jsonl(std::ostream& out) const {
  for (const TraceEvent& ev : events_) {
    out << trace_event_to_json(ev) << '\n';
  }
}

namespace {

Ev ev_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kEvNames.size(); ++i) {
    if (name == kEvNames[i]) return static_cast<Ev>(i);
  }
  throw std::runtime_error("trace: unknown event kind '" + name + "'");
}

MsgKind msg_kind_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kMsgKindNames.size(); ++i) {
    if (name == kMsgKindNames[i]) return static_cast<MsgKind>(i);
  }
  throw std::runtime_error("trace: unknown message kind '" + name + "'");
}

}  // namespace

Trace Trace::read_jsonl(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
    }
    TraceEvent ev;
    ev.t = j.at("t").get<TimeMs>();
    ev.kind = ev_from_name(j.at("k").get<std::string>());
    ev.p = j.at("p").get<ProcessId>();
    ev.peer = j.value("peer", std::uint64_t{0});
    ev.mkind = msg_kind_from_name(j.value("mk", std::string("none")));
    ev.origin = j.value("o", std::uint64_t{0});
    ev.counter = j.value("c", std::uint64_t{0});
    ev.aux = j.value("aux", std::uint64_t{0});
    ev.cb = static_cast<std::uint16_t>(j.value("cb", 0u));
    trace.emit(ev);
  }
  return trace;
}

}  // namespace causalmesh
