#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "causalmesh/trace.hpp"

namespace causalmesh {

/// One periodic snapshot of network and protocol state.
struct MetricsRow {
  TimeMs time_ms = 0;
  TimeMs ramp_factor = 0;        // latency ceiling in effect at snapshot time
  double avg_sp_safe = 0.0;      // mean shortest path over safe links only
  double avg_sp_all = 0.0;       // mean shortest path over all live links
  double avg_unsafe_links = 0.0; // mean per-process count of links still buffering
  double avg_buffer = 0.0;       // mean buffered payloads per open buffer
  std::uint64_t max_buffer = 0;  // largest single buffer at snapshot
  double ctrl_bytes_payload = 0.0;  // mean control bytes per payload send so far
  double vc_pending = 0.0;          // mean parked messages per process (vc only)
};

/// Per-run aggregate written alongside the rows; totals repeat on every CSV row.
struct MetricsReport {
  std::string protocol;
  std::uint32_t n_processes = 0;
  std::vector<MetricsRow> rows;
  std::uint64_t violations = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t abandoned_links = 0;
  std::uint64_t ping_phases = 0;
  std::uint64_t retries = 0;
};

/// Exact column order consumed by the plotting side; keep stable.
extern const char* const kCsvHeader;

void write_csv_header(std::ostream& os);
void write_csv_rows(std::ostream& os, const MetricsReport& report);

/**
 * @brief Mean shortest-path length from the sampled sources to every other
 * node, in hops over the given directed adjacency.
 *
 * A node unreachable from a source counts as nodes.size() hops, an upper
 * bound above any real path. That keeps the mean finite and makes it
 * pairwise-monotone: dropping edges never lowers the value, so the mean over
 * a subgraph (e.g. safe links only) is always >= the mean over the full
 * graph for the same sources. Returns 0 when there is at most one node.
 */
double avg_shortest_path(const std::map<ProcessId, std::vector<ProcessId>>& adj,
                         const std::vector<ProcessId>& sources,
                         const std::vector<ProcessId>& nodes);

/// Control-byte distribution over payload-class link sends in a trace.
struct OverheadStats {
  std::uint64_t count = 0;
  std::uint64_t min_bytes = 0;
  std::uint64_t max_bytes = 0;
  double mean_bytes = 0.0;
};

OverheadStats overhead_from_trace(const Trace& trace);

}  // namespace causalmesh
