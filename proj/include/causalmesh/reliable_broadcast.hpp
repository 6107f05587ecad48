#pragma once

#include <set>
#include <string>

#include "causalmesh/protocol_core.hpp"

namespace causalmesh {

/**
 * @brief Uniform reliable broadcast by flooding with duplicate suppression.
 *
 * Properties:
 *  - Validity: a correct process delivers its own broadcasts.
 *  - Uniform agreement: if any process delivers m, every correct connected
 *    process eventually delivers m.
 *  - Uniform integrity: each message is delivered at most once.
 *
 * Delivery happens on first receipt; with FIFO links and a static topology
 * the delivery order is causal. Dynamic link additions can break that, which
 * is what the preventive variant exists to fix.
 */
class ReliableBroadcast : public Protocol {
 public:
  ReliableBroadcast(ProcessId self, ProcessContext* ctx) : self_(self), ctx_(ctx) {}

  void broadcast(std::string body) override {
    MessageId id = next_message_id(self_, seq_);
    ctx_->note(Ev::Broadcast, self_, id, 0);
    Payload payload{id, std::move(body)};
    log_.mark(id);
    for (ProcessId q : neighbors_) ctx_->send(q, payload);
    ctx_->deliver(payload);
  }

  void on_message(ProcessId /*from*/, const ProtocolMessage& msg) override {
    const Payload* payload = std::get_if<Payload>(&msg);
    if (!payload) return;  // no control traffic in this protocol
    ++stats_.payload_receives;
    ++stats_.scan_touches;  // the single dedup lookup
    if (stats_.max_scan_single < 1) stats_.max_scan_single = 1;
    if (!log_.mark(payload->id)) return;  // duplicate
    // Forward everywhere, including back toward the inbound link; the
    // receiver's dedup absorbs the echo.
    for (ProcessId q : neighbors_) ctx_->send(q, *payload);
    if (horizon_.seen(payload->id)) return;  // pre-join straggler: forward-only
    ctx_->deliver(*payload);
  }

  void on_open(ProcessId q, bool /*initially_safe*/) override { neighbors_.insert(q); }
  void on_close(ProcessId q) override { neighbors_.erase(q); }

  void bootstrap_from(const Protocol& contact) override {
    // Adopt the contact's dedup log as a delivery horizon (see the
    // preventive variant for the rationale); the flood itself is unchanged.
    if (const auto* src = dynamic_cast<const ReliableBroadcast*>(&contact))
      horizon_ = src->log_;
  }

  const std::set<ProcessId>& safe_neighbors() const override { return neighbors_; }
  const DeliveryStats& delivery_stats() const override { return stats_; }

  const ReceivedLog& received_log() const { return log_; }

 private:
  ProcessId self_;
  ProcessContext* ctx_;
  std::set<ProcessId> neighbors_;
  ReceivedLog log_;
  ReceivedLog horizon_;  // ids the join contact had seen; forwarded, never delivered
  std::uint64_t seq_ = 0;
  DeliveryStats stats_;
};

}  // namespace causalmesh
