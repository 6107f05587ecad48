#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "causalmesh/trace.hpp"

namespace causalmesh {

/**
 * @brief Message identity: origin process plus a per-origin sequence number.
 *
 * Counters start at 1; (origin, 0) is reserved as "no message" in traces.
 */
struct MessageId {
  ProcessId origin = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const MessageId&, const MessageId&) = default;
  friend auto operator<=>(const MessageId&, const MessageId&) = default;
};

/// Application payload disseminated by flooding.
struct Payload {
  MessageId id;
  std::string body;
};

/// Probe sent when a link opens; travels over safe links only.
struct Ping {
  ProcessId from = 0;  // process that opened the link
  ProcessId to = 0;    // process at the far end of the new link
  std::uint64_t phase = 0;
};

/// Reply to a Ping; returned over any channel, not necessarily a link.
struct Pong {
  ProcessId from = 0;
  ProcessId to = 0;
  std::uint64_t phase = 0;
};

/// Payload variant carrying a sparse vector clock (baseline protocol).
struct VcPayload {
  MessageId id;
  std::string body;
  // Sparse clock, sorted by process id; absent entries mean zero.
  std::vector<std::pair<ProcessId, std::uint64_t>> clock;
};

using ProtocolMessage = std::variant<Payload, Ping, Pong, VcPayload>;

// Canonical wire accounting. Sizes are fixed by the encoding below and are
// used for overhead metrics only; no real serialization happens on links.
//   MessageId        = 8-byte origin + 8-byte counter
//   Payload          = 1-byte tag + MessageId + body
//   Ping / Pong      = 1-byte tag + 8 + 8 + 8
//   VcPayload        = 1-byte tag + MessageId + 16 bytes per clock entry + body
inline constexpr std::size_t kMessageIdBytes = 16;
inline constexpr std::size_t kTagBytes = 1;
inline constexpr std::size_t kPayloadControlBytes = kTagBytes + kMessageIdBytes;
inline constexpr std::size_t kPingBytes = kTagBytes + 24;
inline constexpr std::size_t kClockEntryBytes = 16;

/// Control bytes of a message: everything except the application body.
std::size_t control_size(const ProtocolMessage& msg);

/**
 * @brief Per-origin compacted log of received message ids.
 *
 * Stores a max-contiguous counter plus an exception set per origin, compacted
 * eagerly. Final state depends only on the set of ids marked, not their order.
 */
class ReceivedLog {
 public:
  /// Marks id as received. Returns true iff it was not seen before.
  bool mark(const MessageId& id);

  bool seen(const MessageId& id) const;

  std::uint64_t max_contiguous(ProcessId origin) const;
  std::size_t exception_count(ProcessId origin) const;
  std::size_t origin_count() const { return per_origin_.size(); }

 private:
  struct OriginLog {
    std::uint64_t max_contiguous = 0;
    std::set<std::uint64_t> exceptions;
  };
  std::map<ProcessId, OriginLog> per_origin_;
};

/// Delivery-path instrumentation, exposed by every protocol.
struct DeliveryStats {
  std::uint64_t payload_receives = 0;  // payload-kind messages handled
  std::uint64_t scan_touches = 0;      // pending-collection elements examined
  std::uint64_t max_scan_single = 0;   // worst touches for one receive
};

/**
 * @brief Services the engine provides to a protocol instance.
 *
 * All effects of a handler go through this interface, which keeps protocol
 * state host-agnostic and unit-testable.
 */
class ProcessContext {
 public:
  virtual ~ProcessContext() = default;

  /// Sends over the process's own FIFO link to `to`. The link must exist.
  virtual void send(ProcessId to, ProtocolMessage msg) = 0;

  /// Sends over any communication mean (used for Pong replies).
  virtual void send_direct(ProcessId to, ProtocolMessage msg) = 0;

  /// Hands a payload to the application (records a deliver event).
  virtual void deliver(const Payload& payload) = 0;

  /// Arms a timeout for a ping phase, if the host has timers configured.
  virtual void arm_phase_timer(std::uint64_t phase) = 0;

  /// Records a protocol-internal control event in the trace.
  virtual void note(Ev kind, ProcessId peer, MessageId msg, std::uint64_t aux) = 0;
};

/**
 * @brief Per-process protocol instance; the contract every variant plugs into.
 *
 * The engine invokes exactly one handler at a time per process; handlers run
 * to completion (no re-entrancy).
 */
class Protocol {
 public:
  virtual ~Protocol() = default;

  virtual void broadcast(std::string body) = 0;
  virtual void on_message(ProcessId from, const ProtocolMessage& msg) = 0;

  /// A link to q was added. initially_safe marks bootstrap links (initial
  /// topology, join contact) that skip the ping phase.
  virtual void on_open(ProcessId q, bool initially_safe) = 0;

  /// The link to q was removed gracefully (or abandoned by the guard).
  virtual void on_close(ProcessId q) = 0;

  /// A phase timer armed via arm_phase_timer fired.
  virtual void on_timeout(std::uint64_t /*phase*/) {}

  /// Join bootstrap: adopt state from the join contact. Messages the contact
  /// had already seen will never be re-sent by it, so the joiner must be able
  /// to recognize them if another path carries them in later.
  virtual void bootstrap_from(const Protocol& /*contact*/) {}

  /// Links currently usable for dissemination.
  virtual const std::set<ProcessId>& safe_neighbors() const = 0;

  /// Links held back from dissemination (buffering), for metrics.
  virtual std::size_t unsafe_link_count() const { return 0; }

  /// (total buffered payloads, largest single buffer), for metrics.
  virtual std::pair<std::size_t, std::size_t> buffer_stats() const { return {0, 0}; }

  /// Parked deliveries (VC baseline), for metrics.
  virtual std::size_t pending_count() const { return 0; }

  virtual const DeliveryStats& delivery_stats() const = 0;
};

/// Monotone per-origin id source.
inline MessageId next_message_id(ProcessId origin, std::uint64_t& counter) {
  return MessageId{origin, ++counter};
}

}  // namespace causalmesh
