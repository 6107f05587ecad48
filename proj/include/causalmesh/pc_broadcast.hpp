#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "causalmesh/buffer_guard.hpp"
#include "causalmesh/protocol_core.hpp"

namespace causalmesh {

/**
 * @brief Causal broadcast that keeps new links out of dissemination until a
 * ping phase proves them safe.
 *
 * Dissemination is flooding with duplicate suppression over the safe set Q.
 * Opening a link starts a phase: the link is held in B with a fresh phase id,
 * every local delivery is appended to its buffer, and a Ping addressed to the
 * far end floods over Q. The far end answers with a Pong over any channel;
 * a Pong matching the current phase flushes the buffer over the new link and
 * promotes it into Q. Buffered FIFO order plus the ping riding behind prior
 * deliveries is what makes the promoted link safe.
 *
 * Invariants: Q and keys(B) are disjoint; buffers preserve delivery order;
 * delivery itself is synchronous with first receipt (no pending scans).
 */
class PreventiveBroadcast : public Protocol {
 public:
  PreventiveBroadcast(ProcessId self, ProcessContext* ctx, GuardConfig guard_cfg = {})
      : self_(self), ctx_(ctx), guard_(guard_cfg) {}

  void broadcast(std::string body) override {
    MessageId id = next_message_id(self_, seq_);
    ctx_->note(Ev::Broadcast, self_, id, 0);
    Payload payload{id, std::move(body)};
    log_.mark(id);
    for (ProcessId q : safe_) ctx_->send(q, payload);
    local_deliver(payload);
  }

  void on_message(ProcessId from, const ProtocolMessage& msg) override {
    if (const Payload* payload = std::get_if<Payload>(&msg)) {
      on_payload(*payload);
    } else if (const Ping* ping = std::get_if<Ping>(&msg)) {
      on_ping(from, *ping);
    } else if (const Pong* pong = std::get_if<Pong>(&msg)) {
      on_pong(*pong);
    }
  }

  void on_open(ProcessId q, bool initially_safe) override {
    if (q == self_ || safe_.count(q) || buffers_.count(q)) return;  // idempotent
    ctx_->note(Ev::LinkOpened, q, {}, 0);
    if (initially_safe || safe_.empty()) {
      // Bootstrap, or no other safe link to carry a ping: promote at once.
      safe_.insert(q);
      ctx_->note(Ev::LinkSafe, q, {}, 0);
      return;
    }
    start_phase(q);
  }

  void on_close(ProcessId q) override {
    if (!safe_.erase(q) && !buffers_.erase(q)) return;
    buffers_.erase(q);
    guard_.on_close(q);
    ctx_->note(Ev::LinkClosed, q, {}, 0);
  }

  void on_timeout(std::uint64_t phase) override {
    auto q = guard_.on_timeout(phase);
    if (!q) return;  // phase already acked or superseded
    ctx_->note(Ev::TimeoutFired, *q, {}, phase);
    retry(*q);
  }

  void bootstrap_from(const Protocol& contact) override {
    // The contact's dedup log becomes our delivery horizon: anything it saw
    // before the join was broadcast before we existed under the old
    // neighborhood, and the contact will never re-send it. If some other
    // link carries such a straggler in later, it is forwarded (the flood
    // must not lose it) but not delivered, because successors of it may
    // already have been delivered here.
    if (const auto* src = dynamic_cast<const PreventiveBroadcast*>(&contact))
      horizon_ = src->log_;
  }

  const std::set<ProcessId>& safe_neighbors() const override { return safe_; }
  std::size_t unsafe_link_count() const override { return buffers_.size(); }

  std::pair<std::size_t, std::size_t> buffer_stats() const override {
    std::size_t total = 0, largest = 0;
    for (const auto& [q, buf] : buffers_) {
      total += buf.payloads.size();
      if (buf.payloads.size() > largest) largest = buf.payloads.size();
    }
    return {total, largest};
  }

  const DeliveryStats& delivery_stats() const override { return stats_; }
  const BufferGuard& guard() const { return guard_; }
  bool phase_pending() const { return !buffers_.empty(); }

 private:
  struct PhaseBuffer {
    std::uint64_t phase = 0;
    std::vector<Payload> payloads;
  };

  void on_payload(const Payload& payload) {
    ++stats_.payload_receives;
    ++stats_.scan_touches;  // the single dedup lookup
    if (stats_.max_scan_single < 1) stats_.max_scan_single = 1;
    if (!log_.mark(payload.id)) return;
    for (ProcessId q : safe_) ctx_->send(q, payload);
    local_deliver(payload);
  }

  void on_ping(ProcessId /*from*/, const Ping& ping) {
    if (ping.to == self_) {
      // Stateless responder; the reply may use any channel.
      ctx_->send_direct(ping.from, Pong{ping.from, ping.to, ping.phase});
      ctx_->note(Ev::PongSent, ping.from, {}, ping.phase);
      return;
    }
    // Flooded probe for someone else: forward once over safe links.
    if (!seen_pings_.insert({ping.from, ping.phase}).second) return;
    for (ProcessId q : safe_) ctx_->send(q, ping);
  }

  void on_pong(const Pong& pong) {
    auto it = buffers_.find(pong.to);
    if (it == buffers_.end() || it->second.phase != pong.phase) {
      ctx_->note(Ev::PongStale, pong.to, {}, pong.phase);
      return;
    }
    // Promote: the link becomes safe, then the held-back deliveries flow
    // over it in order ahead of anything newer.
    ctx_->note(Ev::LinkSafe, pong.to, {}, pong.phase);
    ctx_->note(Ev::BufferFlushed, pong.to, {}, it->second.payloads.size());
    for (const Payload& m : it->second.payloads) ctx_->send(pong.to, m);
    ProcessId q = pong.to;
    buffers_.erase(it);
    safe_.insert(q);
    guard_.on_ack(pong.phase);
  }

  void local_deliver(const Payload& payload) {
    // Append to every open buffer; a buffer that cannot admit the payload
    // restarts its phase instead and the payload is not retained (the new
    // ping rides behind this payload's forwards, which keeps it covered).
    std::vector<ProcessId> to_retry;
    for (auto& [q, buf] : buffers_) {
      if (guard_.would_overflow(buf.payloads.size())) {
        to_retry.push_back(q);
        continue;
      }
      buf.payloads.push_back(payload);
      ctx_->note(Ev::BufferPush, q, payload.id, buf.payloads.size());
    }
    for (ProcessId q : to_retry) retry(q);
    if (horizon_.seen(payload.id)) return;  // pre-join straggler: forward-only
    ctx_->deliver(payload);
  }

  void retry(ProcessId q) {
    switch (guard_.on_retry(q)) {
      case BufferGuard::RetryAction::Reopen: {
        ctx_->note(Ev::PhaseRetry, q, {}, guard_.retry_count(q));
        buffers_.erase(q);
        ctx_->note(Ev::BufferReset, q, {}, 0);
        if (safe_.empty()) {
          // No link left to carry a ping; same promotion rule as open.
          safe_.insert(q);
          ctx_->note(Ev::LinkSafe, q, {}, 0);
          return;
        }
        start_phase(q);
        break;
      }
      case BufferGuard::RetryAction::Abandon:
        ctx_->note(Ev::LinkAbandoned, q, {}, guard_.retry_count(q));
        on_close(q);
        break;
    }
  }

  void start_phase(ProcessId q) {
    std::uint64_t phase = ++phase_counter_;
    buffers_[q] = PhaseBuffer{phase, {}};
    seen_pings_.insert({self_, phase});  // absorb the flood echo
    Ping ping{self_, q, phase};
    for (ProcessId n : safe_) ctx_->send(n, ping);
    ctx_->note(Ev::PingSent, q, {}, phase);
    guard_.on_ping_sent(phase, q);
    if (guard_.config().timers) ctx_->arm_phase_timer(phase);
  }

  ProcessId self_;
  ProcessContext* ctx_;
  std::set<ProcessId> safe_;                     // Q: links open for dissemination
  std::map<ProcessId, PhaseBuffer> buffers_;     // B: links held back, with phase
  std::set<std::pair<ProcessId, std::uint64_t>> seen_pings_;  // flood dedup (origin, phase)
  ReceivedLog log_;
  ReceivedLog horizon_;  // ids the join contact had seen; forwarded, never delivered
  std::uint64_t seq_ = 0;
  std::uint64_t phase_counter_ = 0;
  BufferGuard guard_;
  DeliveryStats stats_;
};

}  // namespace causalmesh
