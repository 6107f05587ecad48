#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "causalmesh/protocol_core.hpp"
#include "causalmesh/trace.hpp"

namespace causalmesh {

/// A process delivered `out_of_order` before its causal predecessor `predecessor`.
struct CausalViolation {
  ProcessId process = 0;
  MessageId predecessor;   // broadcast happened-before the other
  MessageId out_of_order;  // yet this one was delivered first
  friend bool operator==(const CausalViolation&, const CausalViolation&) = default;
  friend auto operator<=>(const CausalViolation&, const CausalViolation&) = default;
};

struct DuplicateDelivery {
  ProcessId process = 0;
  MessageId id;
};

struct MissingDelivery {
  ProcessId process = 0;
  MessageId id;
};

/// On a link flagged safe by the sender, `carried` arrived although the
/// receiver had not yet received `missing`, which the sender delivered first.
struct SafeLinkBreach {
  ProcessId from = 0, to = 0;
  MessageId carried;
  MessageId missing;
};

/**
 * @brief Everything the oracle found in one trace.
 *
 * Counts are exact; the listing vectors are capped so verdicts on large
 * violating runs stay small.
 */
struct Verdict {
  std::uint64_t violation_count = 0;
  std::uint64_t duplicate_count = 0;
  std::uint64_t missing_count = 0;
  std::uint64_t breach_count = 0;
  std::vector<CausalViolation> violations;
  std::vector<DuplicateDelivery> duplicates;
  std::vector<MissingDelivery> missing;
  std::vector<SafeLinkBreach> breaches;
  std::vector<std::string> structural_errors;

  bool clean() const {
    return violation_count == 0 && duplicate_count == 0 && missing_count == 0 &&
           breach_count == 0 && structural_errors.empty();
  }
  std::string to_json() const;
};

/**
 * @brief Replays a trace and checks causal delivery independently of any
 * protocol state.
 *
 * Happened-before is rebuilt from broadcast and deliver events alone, via
 * vector clocks the oracle maintains itself (own-increment on broadcast,
 * merge on delivery). b(m) -> b(m') iff clock(m')[m.origin] >= m.counter.
 *
 * Also checked: at-most-once delivery, completeness (a process alive at the
 * end must deliver every message broadcast after its join line), per-link
 * FIFO of payload traffic, deliver-implies-receive, and the safe-link
 * contract for sends the sender flagged safe.
 */
Verdict verify(const Trace& trace);

}  // namespace causalmesh
