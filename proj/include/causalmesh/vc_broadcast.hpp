#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "causalmesh/protocol_core.hpp"

namespace causalmesh {

/**
 * @brief Causal broadcast baseline: every message carries a vector clock and
 * delivery waits until the clock is covered locally.
 *
 * Dissemination is the same dedup flood as the reliable protocol; ordering is
 * repaired at the receiver by parking messages that arrive too early. The
 * pending scan is deliberately the textbook linear re-scan so the cost the
 * preventive protocol avoids stays measurable.
 */
class VectorClockBroadcast : public Protocol {
 public:
  VectorClockBroadcast(ProcessId self, ProcessContext* ctx) : self_(self), ctx_(ctx) {}

  void broadcast(std::string body) override {
    MessageId id = next_message_id(self_, seq_);
    ctx_->note(Ev::Broadcast, self_, id, 0);
    ++clock_[self_];
    VcPayload msg{id, std::move(body), {}};
    msg.clock.assign(clock_.begin(), clock_.end());  // sorted, sparse
    log_.mark(id);
    for (ProcessId q : neighbors_) ctx_->send(q, msg);
    ctx_->deliver(Payload{msg.id, msg.body});
  }

  void on_message(ProcessId /*from*/, const ProtocolMessage& msg) override {
    const VcPayload* vc = std::get_if<VcPayload>(&msg);
    if (!vc) return;
    ++stats_.payload_receives;
    ++stats_.scan_touches;  // dedup lookup
    if (!log_.mark(vc->id)) return;
    // Forward on receipt, not on delivery: parking must not stall the flood.
    for (ProcessId q : neighbors_) ctx_->send(q, *vc);
    if (ready(*vc)) {
      apply_delivery(*vc);
      drain_pending();
    } else {
      pending_.push_back(*vc);
      ctx_->note(Ev::VcParked, 0, vc->id, pending_.size());
    }
    if (stats_.max_scan_single < last_scan_) stats_.max_scan_single = last_scan_;
    last_scan_ = 0;
  }

  void on_open(ProcessId q, bool /*initially_safe*/) override { neighbors_.insert(q); }
  void on_close(ProcessId q) override { neighbors_.erase(q); }

  void bootstrap_from(const Protocol& contact) override {
    // State-transfer bootstrap: the joiner continues from the contact's
    // ordering state. Messages the contact delivered are covered by the
    // adopted clock (their late copies dedup against the adopted log), and
    // messages the contact still had parked drain here once their
    // dependencies flow in over the new link.
    if (const auto* src = dynamic_cast<const VectorClockBroadcast*>(&contact)) {
      clock_ = src->clock_;
      pending_ = src->pending_;
      log_ = src->log_;
    }
  }

  const std::set<ProcessId>& safe_neighbors() const override { return neighbors_; }
  std::size_t pending_count() const override { return pending_.size(); }
  const DeliveryStats& delivery_stats() const override { return stats_; }

 private:
  std::uint64_t local(ProcessId p) const {
    auto it = clock_.find(p);
    return it == clock_.end() ? 0 : it->second;
  }

  bool ready(const VcPayload& msg) {
    for (const auto& [p, c] : msg.clock) {
      ++stats_.scan_touches;
      ++last_scan_;
      if (p == msg.id.origin) {
        if (c != local(p) + 1) return false;
      } else if (c > local(p)) {
        return false;
      }
    }
    return true;
  }

  void apply_delivery(const VcPayload& msg) {
    ++clock_[msg.id.origin];
    ctx_->deliver(Payload{msg.id, msg.body});
  }

  void drain_pending() {
    // Textbook linear re-scan: restart after every successful delivery.
    bool progressed = true;
    while (progressed && !pending_.empty()) {
      progressed = false;
      for (std::size_t i = 0; i < pending_.size(); ++i) {
        ++stats_.scan_touches;
        ++last_scan_;
        if (ready(pending_[i])) {
          VcPayload msg = pending_[i];
          pending_.erase(pending_.begin() + static_cast<std::ptrdiff_t>(i));
          apply_delivery(msg);
          ctx_->note(Ev::VcDrained, 0, msg.id, pending_.size());
          progressed = true;
          break;
        }
      }
    }
  }

  ProcessId self_;
  ProcessContext* ctx_;
  std::set<ProcessId> neighbors_;
  std::map<ProcessId, std::uint64_t> clock_;  // delivered count per origin
  std::vector<VcPayload> pending_;
  ReceivedLog log_;
  std::uint64_t seq_ = 0;
  std::uint64_t last_scan_ = 0;
  DeliveryStats stats_;
};

}  // namespace causalmesh
