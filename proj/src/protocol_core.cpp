#include "causalmesh/protocol_core.hpp"

namespace causalmesh {

std::size_t control_size(const ProtocolMessage& msg) {
  struct Sizer {
    std::size_t operator()(const Payload&) const { return kPayloadControlBytes; }
    std::size_t operator()(const Ping&) const { return kPingBytes; }
    std::size_t operator()(const Pong&) const { return kPingBytes; }
    std::size_t operator()(const VcPayload& vc) const {
      return kPayloadControlBytes + vc.clock.size() * kClockEntryBytes;
    }
  };
  return std::visit(Sizer{}, msg);
}

bool ReceivedLog::mark(const MessageId& id) {
  OriginLog& log = per_origin_[id.origin];
  if (id.counter <= log.max_contiguous || log.exceptions.count(id.counter)) {
    return false;
  }
  if (id.counter == log.max_contiguous + 1) {
    ++log.max_contiguous;
    // Compact eagerly: absorb any exceptions that became contiguous.
    auto it = log.exceptions.begin();
    while (it != log.exceptions.end() && *it == log.max_contiguous + 1) {
      ++log.max_contiguous;
      it = log.exceptions.erase(it);
    }
  } else {
    log.exceptions.insert(id.counter);
  }
  return true;
}

bool ReceivedLog::seen(const MessageId& id) const {
  auto it = per_origin_.find(id.origin);
  if (it == per_origin_.end()) return false;
  return id.counter <= it->second.max_contiguous ||
         it->second.exceptions.count(id.counter) > 0;
}

std::uint64_t ReceivedLog::max_contiguous(ProcessId origin) const {
  auto it = per_origin_.find(origin);
  return it == per_origin_.end() ? 0 : it->second.max_contiguous;
}

std::size_t ReceivedLog::exception_count(ProcessId origin) const {
  auto it = per_origin_.find(origin);
  return it == per_origin_.end() ? 0 : it->second.exceptions.size();
}

}  // namespace causalmesh
