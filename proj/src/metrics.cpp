#include "causalmesh/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <deque>

namespace causalmesh {

const char* const kCsvHeader =
    "time_ms,protocol,n_processes,ramp_factor,avg_sp_safe,avg_sp_all,avg_unsafe_links,"
    "avg_buffer,max_buffer,ctrl_bytes_payload,vc_pending,violations,duplicates,"
    "abandoned_links,ping_phases,retries";

namespace {

void write_double(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << "inf";
    return;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  os << buf;
}

}  // namespace

void write_csv_header(std::ostream& os) { os << kCsvHeader << "\n"; }

void write_csv_rows(std::ostream& os, const MetricsReport& r) {
  for (const auto& row : r.rows) {
    os << row.time_ms << ',' << r.protocol << ',' << r.n_processes << ',' << row.ramp_factor << ',';
    write_double(os, row.avg_sp_safe);
    os << ',';
    write_double(os, row.avg_sp_all);
    os << ',';
    write_double(os, row.avg_unsafe_links);
    os << ',';
    write_double(os, row.avg_buffer);
    os << ',' << row.max_buffer << ',';
    write_double(os, row.ctrl_bytes_payload);
    os << ',';
    write_double(os, row.vc_pending);
    os << ',' << r.violations << ',' << r.duplicates << ',' << r.abandoned_links << ','
       << r.ping_phases << ',' << r.retries << "\n";
  }
}

double avg_shortest_path(const std::map<ProcessId, std::vector<ProcessId>>& adj,
                         const std::vector<ProcessId>& sources,
                         const std::vector<ProcessId>& nodes) {
  if (nodes.size() <= 1) return 0.0;
  const std::uint64_t penalty = nodes.size();  // above any real hop count
  std::uint64_t pair_count = 0;
  std::uint64_t hop_sum = 0;
  for (ProcessId src : sources) {
    std::map<ProcessId, std::uint64_t> dist;
    dist[src] = 0;
    std::deque<ProcessId> frontier{src};
    while (!frontier.empty()) {
      ProcessId p = frontier.front();
      frontier.pop_front();
      auto it = adj.find(p);
      if (it == adj.end()) continue;
      for (ProcessId q : it->second) {
        if (dist.emplace(q, dist[p] + 1).second) frontier.push_back(q);
      }
    }
    for (ProcessId p : nodes) {
      if (p == src) continue;
      auto it = dist.find(p);
      ++pair_count;
      hop_sum += it == dist.end() ? penalty : it->second;
    }
  }
  if (pair_count == 0) return 0.0;
  return static_cast<double>(hop_sum) / static_cast<double>(pair_count);
}

OverheadStats overhead_from_trace(const Trace& trace) {
  OverheadStats st;
  double sum = 0.0;
  for (const auto& ev : trace.events()) {
    if (ev.kind != Ev::Send) continue;
    if (ev.mkind != MsgKind::Payload && ev.mkind != MsgKind::VcPayload) continue;
    const std::uint64_t cb = ev.cb;
    if (st.count == 0) {
      st.min_bytes = st.max_bytes = cb;
    } else {
      st.min_bytes = std::min(st.min_bytes, cb);
      st.max_bytes = std::max(st.max_bytes, cb);
    }
    ++st.count;
    sum += static_cast<double>(cb);
  }
  if (st.count > 0) st.mean_bytes = sum / static_cast<double>(st.count);
  return st;
}

}  // namespace causalmesh
