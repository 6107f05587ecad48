#pragma once

#include <cstdint>
#include <string>

#include "causalmesh/metrics.hpp"
#include "causalmesh/protocol_core.hpp"
#include "causalmesh/scenario.hpp"
#include "causalmesh/trace.hpp"

namespace causalmesh {

/// Counters the engine keeps outside the trace; cheap even in reduced detail.
struct EngineCounters {
  std::uint64_t events_processed = 0;
  std::uint64_t ping_phases = 0;
  std::uint64_t retries = 0;
  std::uint64_t abandoned_links = 0;
  std::uint64_t timeouts_fired = 0;
  std::uint64_t dropped_pongs = 0;
  std::uint64_t payload_link_sends = 0;  // payload-class sends over links
  std::uint64_t ctrl_bytes_min = 0;
  std::uint64_t ctrl_bytes_max = 0;
  double ctrl_bytes_sum = 0.0;
  std::uint64_t broadcasts = 0;
  std::uint64_t deliveries = 0;
};

struct RunResult {
  Trace trace;
  MetricsReport metrics;
  EngineCounters counters;
  DeliveryStats delivery;      // summed over processes; max_scan_single is a max
  bool quiescent = true;       // queue drained under the time limit
  std::string outcome = "quiescent";
};

/**
 * @brief Deterministic discrete-event run of one scenario.
 *
 * Virtual time in milliseconds; ties broken by event insertion order. Links
 * are FIFO per direction: an arrival never overtakes an earlier send on the
 * same directed link even while latency ramps upward. Identical scenarios
 * (including seed) produce byte-identical traces and metrics.
 *
 * Throws ScenarioError for scripted actions that reference dead or missing
 * processes, or that would partition the network without allowPartition.
 */
RunResult run_simulation(const Scenario& scenario);

}  // namespace causalmesh
