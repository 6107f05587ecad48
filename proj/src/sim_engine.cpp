#include "causalmesh/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <queue>
#include <set>
#include <utility>
#include <variant>
#include <vector>

#include "causalmesh/pc_broadcast.hpp"
#include "causalmesh/reliable_broadcast.hpp"
#include "causalmesh/vc_broadcast.hpp"

namespace causalmesh {
namespace {

// splitmix64: small, fast, identical on every platform. Used both to derive
// the per-concern streams from the run seed and as the generator itself, so
// results never depend on a standard library's distribution internals.
std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() { return splitmix64(state); }
  double u01() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
};

bool alive_set_contains(const std::vector<ProcessId>& sorted_ids, ProcessId p) {
  return std::binary_search(sorted_ids.begin(), sorted_ids.end(), p);
}

MsgKind kind_of(const ProtocolMessage& msg) {
  if (std::holds_alternative<Payload>(msg)) return MsgKind::Payload;
  if (std::holds_alternative<Ping>(msg)) return MsgKind::Ping;
  if (std::holds_alternative<Pong>(msg)) return MsgKind::Pong;
  return MsgKind::VcPayload;
}

// Identity fields recorded in Send/Receive trace lines. For probes the pair
// is (opener, phase), which is exactly the flood dedup key.
std::pair<std::uint64_t, std::uint64_t> trace_identity(const ProtocolMessage& msg) {
  if (const auto* p = std::get_if<Payload>(&msg)) return {p->id.origin, p->id.counter};
  if (const auto* p = std::get_if<Ping>(&msg)) return {p->from, p->phase};
  if (const auto* p = std::get_if<Pong>(&msg)) return {p->from, p->phase};
  const auto& v = std::get<VcPayload>(msg);
  return {v.id.origin, v.id.counter};
}

class Sim;

class EngineContext final : public ProcessContext {
 public:
  EngineContext(Sim* sim, ProcessId self) : sim_(sim), self_(self) {}
  void send(ProcessId to, ProtocolMessage msg) override;
  void send_direct(ProcessId to, ProtocolMessage msg) override;
  void deliver(const Payload& payload) override;
  void arm_phase_timer(std::uint64_t phase) override;
  void note(Ev kind, ProcessId peer, MessageId msg, std::uint64_t aux) override;

 private:
  Sim* sim_;
  ProcessId self_;
};

class Sim {
 public:
  explicit Sim(const Scenario& sc)
      : sc_(sc),
        rng_topo_(sc.seed ^ 0xA11CE5EEDULL),
        rng_lat_(sc.seed ^ 0x1A7E9C1E5ULL),
        rng_work_(sc.seed ^ 0x5C4EDB01DULL),
        rng_metrics_(sc.seed ^ 0x0B5E27EBAULL) {}

  RunResult run();

  // EngineContext entry points.
  void link_send(ProcessId from, ProcessId to, const ProtocolMessage& msg);
  void direct_send(ProcessId from, ProcessId to, const ProtocolMessage& msg);
  void on_deliver(ProcessId p, const Payload& payload);
  void arm_timer(ProcessId p, std::uint64_t phase);
  void on_note(ProcessId p, Ev kind, ProcessId peer, MessageId msg, std::uint64_t aux);

 private:
  struct QEv {
    TimeMs t = 0;
    std::uint64_t seq = 0;
    enum class K { LinkMsg, DirectMsg, Timer, Action, Shuffle, Snapshot, Work } k = K::Action;
    ProcessId a = 0, b = 0;  // messages: sender, receiver; others: subject in a
    ProtocolMessage msg{Payload{}};
    std::uint64_t phase = 0;
    int action_idx = -1;
  };
  struct QEvCmp {
    bool operator()(const QEv& x, const QEv& y) const {
      if (x.t != y.t) return x.t > y.t;
      return x.seq > y.seq;
    }
  };
  struct Link {
    double u = 0.0;                   // latency factor in [0,1)
    std::optional<TimeMs> fixed;      // pinned latency overrides the ramp
    bool backbone = false;
    bool closed = false;              // graceful removal: in-flight still arrives
    bool dead = false;                // crash: in-flight is lost
    TimeMs floor[2] = {0, 0};         // FIFO arrival floor per direction
  };
  struct Proc {
    std::unique_ptr<EngineContext> ctx;
    std::unique_ptr<Protocol> proto;
    std::set<ProcessId> view;
    int backbone_degree = 0;
    bool departed = false;
    bool crashed = false;
    std::uint64_t drop_pongs = 0;
  };

  static std::pair<ProcessId, ProcessId> norm(ProcessId a, ProcessId b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }

  void push(QEv ev) {
    ev.seq = ++seq_;
    queue_.push(std::move(ev));
  }

  bool trace_hop(MsgKind mk) const {
    if (mk == MsgKind::Ping || mk == MsgKind::Pong) return trace_ping_hops_;
    return true;
  }

  TimeMs ramp_ceiling(TimeMs t) const {
    const LatencyRamp& r = sc_.latency_ramp;
    if (r.ramp_duration_ms <= 0 || t >= r.ramp_duration_ms) return r.end_ms;
    const double f = static_cast<double>(t) / static_cast<double>(r.ramp_duration_ms);
    return r.start_ms + static_cast<TimeMs>(std::llround(f * static_cast<double>(r.end_ms - r.start_ms)));
  }

  bool alive(ProcessId p) const {
    auto it = procs_.find(p);
    return it != procs_.end() && !it->second.departed;
  }

  std::vector<ProcessId> alive_ids() const {
    std::vector<ProcessId> out;
    for (const auto& [p, pr] : procs_)
      if (!pr.departed) out.push_back(p);
    return out;
  }

  void make_proc(ProcessId p);
  void setup();
  void build_initial_topology();
  void mark_backbone_from_bfs();
  void schedule_shuffles();
  void schedule_workload();
  void schedule_snapshots();

  bool add_link_impl(ProcessId a, ProcessId b, std::optional<TimeMs> fixed, bool backbone,
                     bool initially_safe);
  void remove_link_impl(ProcessId a, ProcessId b);
  void join_impl(ProcessId p, ProcessId contact);
  void leave_impl(ProcessId p);
  void crash_impl(ProcessId p);

  bool connected_without_edge(ProcessId a, ProcessId b) const;
  bool connected_without_node(ProcessId skip) const;
  bool view_graph_connected(const std::set<ProcessId>& nodes,
                            std::pair<ProcessId, ProcessId> skip_edge) const;

  void exec_action(const ScheduleAction& act);
  void exec_shuffle(ProcessId p);
  void dispatch(QEv& ev);
  void snapshot(TimeMs t);

  [[noreturn]] void action_fail(const std::string& msg) const {
    throw ScenarioError("schedule at t=" + std::to_string(now_) + "ms: " + msg);
  }

  const Scenario sc_;
  Trace trace_;
  EngineCounters counters_;
  MetricsReport metrics_;
  Rng rng_topo_, rng_lat_, rng_work_, rng_metrics_;
  std::priority_queue<QEv, std::vector<QEv>, QEvCmp> queue_;
  std::uint64_t seq_ = 0;
  TimeMs now_ = 0;
  TimeMs last_event_t_ = 0;
  std::map<ProcessId, Proc> procs_;
  std::map<std::pair<ProcessId, ProcessId>, Link> links_;
  std::vector<ScheduleAction> schedule_;
  ProcessId next_pid_ = 0;
  bool trace_ping_hops_ = true;
  bool timers_enabled_ = false;
  TimeMs timer_duration_ = 0;
  TimeMs time_limit_ = 0;
  int diameter_estimate_ = 3;
  bool quiescent_ = true;
  std::string outcome_ = "quiescent";
};

void EngineContext::send(ProcessId to, ProtocolMessage msg) { sim_->link_send(self_, to, std::move(msg)); }
void EngineContext::send_direct(ProcessId to, ProtocolMessage msg) {
  sim_->direct_send(self_, to, std::move(msg));
}
void EngineContext::deliver(const Payload& payload) { sim_->on_deliver(self_, payload); }
void EngineContext::arm_phase_timer(std::uint64_t phase) { sim_->arm_timer(self_, phase); }
void EngineContext::note(Ev kind, ProcessId peer, MessageId msg, std::uint64_t aux) {
  sim_->on_note(self_, kind, peer, msg, aux);
}

void Sim::make_proc(ProcessId p) {
  Proc pr;
  pr.ctx = std::make_unique<EngineContext>(this, p);
  if (sc_.protocol == "rbroadcast") {
    pr.proto = std::make_unique<ReliableBroadcast>(p, pr.ctx.get());
  } else if (sc_.protocol == "vc") {
    pr.proto = std::make_unique<VectorClockBroadcast>(p, pr.ctx.get());
  } else {
    GuardConfig g;
    g.max_size = sc_.guard.max_size;
    g.max_retry = sc_.guard.max_retry;
    g.timers = timers_enabled_;
    pr.proto = std::make_unique<PreventiveBroadcast>(p, pr.ctx.get(), g);
  }
  procs_[p] = std::move(pr);
  if (p >= next_pid_) next_pid_ = p + 1;
}

void Sim::setup() {
  trace_ping_hops_ = sc_.trace_detail != "payloads";
  diameter_estimate_ = std::max(3, static_cast<int>(std::ceil(std::log2(std::max<std::uint32_t>(2, sc_.process_count)))) + 1);
  const TimeMs lat_max = std::max(sc_.latency_ramp.start_ms, sc_.latency_ramp.end_ms);
  timers_enabled_ = sc_.guard.timeout_ms.has_value() || sc_.guard.timeout_auto;
  if (sc_.guard.timeout_ms) {
    timer_duration_ = *sc_.guard.timeout_ms;
  } else {
    timer_duration_ = std::max<TimeMs>(50, 4 * lat_max * diameter_estimate_ + sc_.direct_latency_ms);
  }
  const TimeMs drain_slack = 10 * lat_max * diameter_estimate_ + 60000;
  time_limit_ = sc_.time_limit_ms.value_or(
      sc_.duration_ms + (timers_enabled_ ? 12 * timer_duration_ : 0) + drain_slack);

  metrics_.protocol = sc_.protocol;
  metrics_.n_processes = sc_.process_count;

  for (ProcessId p = 0; p < sc_.process_count; ++p) {
    make_proc(p);
    trace_.emit({0, Ev::Join, MsgKind::None, 0, p, 0, 0, 0, 0});
  }
  build_initial_topology();

  schedule_ = sc_.dynamics.schedule;
  std::stable_sort(schedule_.begin(), schedule_.end(),
                   [](const ScheduleAction& a, const ScheduleAction& b) { return a.at_ms < b.at_ms; });

  schedule_snapshots();
  for (int i = 0; i < static_cast<int>(schedule_.size()); ++i) {
    QEv ev;
    ev.t = schedule_[i].at_ms;
    ev.k = QEv::K::Action;
    ev.action_idx = i;
    push(std::move(ev));
  }
  schedule_shuffles();
  schedule_workload();
}

void Sim::build_initial_topology() {
  const std::uint32_t n = sc_.process_count;
  switch (sc_.initial_topology.kind) {
    case TopologySpec::Kind::Clique:
      // Star from the lowest id is the backbone; the rest fill in the clique.
      for (ProcessId a = 0; a < n; ++a)
        for (ProcessId b = a + 1; b < n; ++b) add_link_impl(a, b, std::nullopt, a == 0, true);
      break;
    case TopologySpec::Kind::RandomGraph: {
      // Random attachment tree guarantees connectivity and doubles as the
      // engine-protected backbone; extra edges bring the degree up.
      for (ProcessId p = 1; p < n; ++p) {
        ProcessId parent = rng_topo_.below(p);
        add_link_impl(parent, p, std::nullopt, true, true);
      }
      const std::uint64_t target_edges =
          static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(std::max(1, sc_.initial_topology.degree)) / 2;
      std::uint64_t edges = n > 0 ? n - 1 : 0;
      std::uint64_t attempts = 0;
      const std::uint64_t max_attempts = 40 * (target_edges + 8);
      while (edges < target_edges && attempts < max_attempts && n >= 2) {
        ++attempts;
        ProcessId a = rng_topo_.below(n);
        ProcessId b = rng_topo_.below(n);
        if (a == b) continue;
        auto it = links_.find(norm(a, b));
        if (it != links_.end() && !it->second.closed && !it->second.dead) continue;
        add_link_impl(a, b, std::nullopt, false, true);
        ++edges;
      }
      break;
    }
    case TopologySpec::Kind::Explicit:
      for (const auto& [a, b, lat] : sc_.initial_topology.edges) add_link_impl(a, b, lat, false, true);
      mark_backbone_from_bfs();
      if (!sc_.allow_partition) {
        std::set<ProcessId> nodes;
        for (const auto& [p, pr] : procs_) nodes.insert(p);
        if (!view_graph_connected(nodes, {0, 0}))
          throw ScenarioError("initial topology is disconnected; set allowPartition to permit this");
      }
      break;
  }
}

void Sim::mark_backbone_from_bfs() {
  // BFS forest over the explicit edges; tree edges become the backbone.
  std::set<ProcessId> visited;
  for (const auto& [root, pr] : procs_) {
    if (visited.count(root)) continue;
    visited.insert(root);
    std::deque<ProcessId> frontier{root};
    while (!frontier.empty()) {
      ProcessId p = frontier.front();
      frontier.pop_front();
      for (ProcessId q : procs_.at(p).view) {
        if (visited.count(q)) continue;
        visited.insert(q);
        Link& l = links_.at(norm(p, q));
        l.backbone = true;
        ++procs_.at(p).backbone_degree;
        ++procs_.at(q).backbone_degree;
        frontier.push_back(q);
      }
    }
  }
}

void Sim::schedule_shuffles() {
  if (sc_.dynamics.shuffle_period_ms <= 0) return;
  const TimeMs period = sc_.dynamics.shuffle_period_ms;
  for (ProcessId p = 0; p < sc_.process_count; ++p) {
    const TimeMs phase = static_cast<TimeMs>(rng_topo_.below(static_cast<std::uint64_t>(period)));
    for (TimeMs t = phase; t <= sc_.duration_ms; t += period) {
      if (t == 0) continue;  // let the initial topology settle for one tick
      QEv ev;
      ev.t = t;
      ev.k = QEv::K::Shuffle;
      ev.a = p;
      push(std::move(ev));
    }
  }
}

void Sim::schedule_workload() {
  const Workload& w = sc_.workload;
  if (w.broadcasts_per_process_per_sec <= 0 || w.total_messages == 0) return;
  const double rate_per_ms = w.broadcasts_per_process_per_sec / 1000.0;
  std::vector<std::pair<TimeMs, ProcessId>> times;
  for (ProcessId p = 0; p < sc_.process_count; ++p) {
    double t = 0.0;
    while (true) {
      const double gap = -std::log(1.0 - rng_work_.u01()) / rate_per_ms;
      t += gap;
      if (t > static_cast<double>(sc_.duration_ms)) break;
      times.emplace_back(static_cast<TimeMs>(std::llround(t)), p);
    }
  }
  std::stable_sort(times.begin(), times.end());
  if (times.size() > w.total_messages) times.resize(w.total_messages);
  for (const auto& [t, p] : times) {
    QEv ev;
    ev.t = t;
    ev.k = QEv::K::Work;
    ev.a = p;
    push(std::move(ev));
  }
}

void Sim::schedule_snapshots() {
  for (TimeMs t = 0; t <= sc_.duration_ms; t += sc_.metrics_interval_ms) {
    QEv ev;
    ev.t = t;
    ev.k = QEv::K::Snapshot;
    push(std::move(ev));
  }
}

bool Sim::add_link_impl(ProcessId a, ProcessId b, std::optional<TimeMs> fixed, bool backbone,
                        bool initially_safe) {
  if (a == b) return false;
  const auto key = norm(a, b);
  auto it = links_.find(key);
  if (it != links_.end() && !it->second.closed && !it->second.dead) return false;
  Link l;
  if (it != links_.end()) {
    // Re-added pair: keep the FIFO floor so late arrivals from the previous
    // incarnation cannot be overtaken by new traffic.
    l.floor[0] = it->second.floor[0];
    l.floor[1] = it->second.floor[1];
  }
  l.fixed = fixed;
  l.u = fixed ? 0.0 : rng_lat_.u01();
  l.backbone = backbone;
  links_[key] = l;
  procs_.at(a).view.insert(b);
  procs_.at(b).view.insert(a);
  if (backbone) {
    ++procs_.at(a).backbone_degree;
    ++procs_.at(b).backbone_degree;
  }
  trace_.emit({now_, Ev::AddLink, MsgKind::None, 0, a, b, 0, 0, 0});
  procs_.at(key.first).proto->on_open(key.second, initially_safe);
  procs_.at(key.second).proto->on_open(key.first, initially_safe);
  return true;
}

void Sim::remove_link_impl(ProcessId a, ProcessId b) {
  const auto key = norm(a, b);
  auto it = links_.find(key);
  if (it == links_.end() || it->second.closed || it->second.dead)
    action_fail("remove_link: no live link " + std::to_string(a) + "-" + std::to_string(b));
  trace_.emit({now_, Ev::RemoveLink, MsgKind::None, 0, a, b, 0, 0, 0});
  if (it->second.backbone) {
    --procs_.at(a).backbone_degree;
    --procs_.at(b).backbone_degree;
  }
  it->second.closed = true;
  it->second.backbone = false;
  procs_.at(a).view.erase(b);
  procs_.at(b).view.erase(a);
  if (!procs_.at(key.first).departed) procs_.at(key.first).proto->on_close(key.second);
  if (!procs_.at(key.second).departed) procs_.at(key.second).proto->on_close(key.first);
}

void Sim::join_impl(ProcessId p, ProcessId contact) {
  if (procs_.count(p)) action_fail("join: process " + std::to_string(p) + " already exists");
  if (!alive(contact)) action_fail("join: contact " + std::to_string(contact) + " is not alive");
  make_proc(p);
  trace_.emit({now_, Ev::Join, MsgKind::None, 0, p, contact, 0, 0, 0});
  // Join is a state transfer: the joiner adopts the contact's view of what
  // has already been seen. Without it, a message still in transit elsewhere
  // can reach the joiner through a later link after the joiner has delivered
  // its causal successors.
  procs_.at(p).proto->bootstrap_from(*procs_.at(contact).proto);
  // The bootstrap link is safe at both ends: the joiner has no history to
  // cover, and it gives the joiner a safe inbound path so later ping floods
  // can reach it.
  add_link_impl(p, contact, std::nullopt, true, true);
}

void Sim::leave_impl(ProcessId p) {
  if (!alive(p)) action_fail("leave: process " + std::to_string(p) + " is not alive");
  trace_.emit({now_, Ev::Leave, MsgKind::None, 0, p, 0, 0, 0, 0});
  const std::set<ProcessId> view = procs_.at(p).view;
  for (ProcessId q : view) {
    const auto key = norm(p, q);
    Link& l = links_.at(key);
    trace_.emit({now_, Ev::RemoveLink, MsgKind::None, 0, p, q, 0, 0, 0});
    if (l.backbone) {
      --procs_.at(p).backbone_degree;
      --procs_.at(q).backbone_degree;
    }
    l.closed = true;
    l.backbone = false;
    procs_.at(p).view.erase(q);
    procs_.at(q).view.erase(p);
    procs_.at(p).proto->on_close(q);
    if (!procs_.at(q).departed) procs_.at(q).proto->on_close(p);
  }
  procs_.at(p).departed = true;
}

void Sim::crash_impl(ProcessId p) {
  if (!alive(p)) action_fail("crash: process " + std::to_string(p) + " is not alive");
  trace_.emit({now_, Ev::Crash, MsgKind::None, 0, p, 0, 0, 0, 0});
  const std::set<ProcessId> view = procs_.at(p).view;
  for (ProcessId q : view) {
    const auto key = norm(p, q);
    Link& l = links_.at(key);
    if (l.backbone) {
      --procs_.at(p).backbone_degree;
      --procs_.at(q).backbone_degree;
    }
    l.dead = true;  // in-flight traffic is lost in both directions
    l.backbone = false;
    procs_.at(p).view.erase(q);
    procs_.at(q).view.erase(p);
    // Nobody is told; survivors discover the crash through ping timeouts.
  }
  procs_.at(p).departed = true;
  procs_.at(p).crashed = true;
}

bool Sim::view_graph_connected(const std::set<ProcessId>& nodes,
                               std::pair<ProcessId, ProcessId> skip_edge) const {
  if (nodes.empty()) return true;
  std::set<ProcessId> visited;
  std::deque<ProcessId> frontier{*nodes.begin()};
  visited.insert(*nodes.begin());
  while (!frontier.empty()) {
    ProcessId p = frontier.front();
    frontier.pop_front();
    for (ProcessId q : procs_.at(p).view) {
      if (!nodes.count(q)) continue;
      if (norm(p, q) == skip_edge) continue;
      if (visited.insert(q).second) frontier.push_back(q);
    }
  }
  return visited.size() == nodes.size();
}

bool Sim::connected_without_edge(ProcessId a, ProcessId b) const {
  std::set<ProcessId> nodes;
  for (const auto& [p, pr] : procs_)
    if (!pr.departed) nodes.insert(p);
  return view_graph_connected(nodes, norm(a, b));
}

bool Sim::connected_without_node(ProcessId skip) const {
  std::set<ProcessId> nodes;
  for (const auto& [p, pr] : procs_)
    if (!pr.departed && p != skip) nodes.insert(p);
  // Temporarily exclude the node by not listing it; its view edges dangle and
  // are filtered by the nodes set.
  return view_graph_connected(nodes, {0, 0});
}

void Sim::exec_action(const ScheduleAction& act) {
  switch (act.kind) {
    case ScheduleAction::Kind::Broadcast: {
      if (!alive(act.process)) action_fail("broadcast: process " + std::to_string(act.process) + " is not alive");
      procs_.at(act.process).proto->broadcast(act.body);
      break;
    }
    case ScheduleAction::Kind::AddLink: {
      if (!alive(act.from) || !alive(act.to)) action_fail("add_link: endpoint not alive");
      add_link_impl(act.from, act.to, act.latency_ms, false, false);
      break;
    }
    case ScheduleAction::Kind::RemoveLink: {
      if (!alive(act.from) || !alive(act.to)) action_fail("remove_link: endpoint not alive");
      if (!sc_.allow_partition && !connected_without_edge(act.from, act.to))
        action_fail("remove_link would partition the network");
      remove_link_impl(act.from, act.to);
      break;
    }
    case ScheduleAction::Kind::Join:
      join_impl(act.process, act.contact);
      break;
    case ScheduleAction::Kind::Leave: {
      if (!alive(act.process)) action_fail("leave: process " + std::to_string(act.process) + " is not alive");
      if (!sc_.allow_partition && !connected_without_node(act.process))
        action_fail("leave would partition the network");
      leave_impl(act.process);
      break;
    }
    case ScheduleAction::Kind::Crash: {
      if (!alive(act.process)) action_fail("crash: process " + std::to_string(act.process) + " is not alive");
      if (!sc_.allow_partition && !connected_without_node(act.process))
        action_fail("crash would partition the network");
      crash_impl(act.process);
      break;
    }
    case ScheduleAction::Kind::JoinRandom: {
      const auto ids = alive_ids();
      if (ids.empty()) break;
      const ProcessId contact = ids[rng_topo_.below(ids.size())];
      join_impl(next_pid_, contact);
      break;
    }
    case ScheduleAction::Kind::LeaveRandom: {
      // Only backbone leaves may go; dropping one can never split the rest.
      std::vector<ProcessId> candidates;
      const auto ids = alive_ids();
      if (ids.size() <= 2) break;
      for (ProcessId p : ids)
        if (procs_.at(p).backbone_degree == 1) candidates.push_back(p);
      if (candidates.empty()) break;
      leave_impl(candidates[rng_topo_.below(candidates.size())]);
      break;
    }
    case ScheduleAction::Kind::AddRandomLink: {
      const auto ids = alive_ids();
      if (ids.size() < 2) break;
      // Bounded attempts keep the draw count deterministic-ish but finite;
      // dense graphs may simply have no free pair to offer.
      for (int attempt = 0; attempt < 10; ++attempt) {
        const ProcessId a = ids[rng_topo_.below(ids.size())];
        const ProcessId b = ids[rng_topo_.below(ids.size())];
        if (a == b) continue;
        if (procs_.at(a).view.count(b)) continue;
        add_link_impl(a, b, std::nullopt, false, false);
        break;
      }
      break;
    }
    case ScheduleAction::Kind::RemoveRandomLink: {
      std::vector<std::pair<ProcessId, ProcessId>> candidates;
      for (const auto& [key, l] : links_) {
        if (l.closed || l.dead || l.backbone) continue;
        if (!alive(key.first) || !alive(key.second)) continue;
        candidates.push_back(key);
      }
      if (candidates.empty()) break;
      const auto& key = candidates[rng_topo_.below(candidates.size())];
      remove_link_impl(key.first, key.second);
      break;
    }
    case ScheduleAction::Kind::DropPong:
      if (!alive(act.process)) action_fail("drop_pong: process " + std::to_string(act.process) + " is not alive");
      procs_.at(act.process).drop_pongs += act.count;
      break;
  }
}

void Sim::exec_shuffle(ProcessId p) {
  if (!alive(p)) return;
  Proc& pp = procs_.at(p);
  if (pp.view.empty()) return;
  std::vector<ProcessId> view(pp.view.begin(), pp.view.end());
  const ProcessId q = view[rng_topo_.below(view.size())];

  auto transferable = [&](ProcessId owner, ProcessId partner) {
    std::vector<ProcessId> out;
    for (ProcessId x : procs_.at(owner).view) {
      if (x == partner) continue;
      const Link& l = links_.at(norm(owner, x));
      if (l.backbone) continue;  // the engine never hands off backbone edges
      out.push_back(x);
    }
    return out;
  };
  auto pick_half = [&](std::vector<ProcessId> pool) {
    const std::size_t half = (pool.size() + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_topo_.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(half);
    return pool;
  };

  // Both halves are chosen against the pre-exchange views, then applied.
  const std::vector<ProcessId> give_p = pick_half(transferable(p, q));
  const std::vector<ProcessId> give_q = pick_half(transferable(q, p));

  auto apply = [&](ProcessId from, ProcessId to, const std::vector<ProcessId>& xs) {
    for (ProcessId x : xs) {
      if (!alive(x) || !alive(to) || !alive(from)) continue;
      const auto key = norm(from, x);
      auto it = links_.find(key);
      if (it == links_.end() || it->second.closed || it->second.dead || it->second.backbone) continue;
      auto peer_it = links_.find(norm(to, x));
      if (peer_it != links_.end() && !peer_it->second.closed && !peer_it->second.dead)
        continue;  // target already has this neighbor; skip, degree stays put
      if (x == to) continue;
      remove_link_impl(from, x);
      add_link_impl(to, x, std::nullopt, false, false);
    }
  };
  apply(p, q, give_p);
  apply(q, p, give_q);
}

void Sim::link_send(ProcessId from, ProcessId to, const ProtocolMessage& msg) {
  const auto it = links_.find(norm(from, to));
  if (it == links_.end() || it->second.closed || it->second.dead) return;  // lost race with removal
  Link& l = it->second;
  const TimeMs lat = l.fixed
                         ? *l.fixed
                         : static_cast<TimeMs>(l.u * static_cast<double>(ramp_ceiling(now_)));
  const int dir = from < to ? 0 : 1;
  const TimeMs arrival = std::max(now_ + lat, l.floor[dir]);
  l.floor[dir] = arrival;
  const MsgKind mk = kind_of(msg);
  const std::uint16_t cb = static_cast<std::uint16_t>(control_size(msg));
  if (mk == MsgKind::Payload || mk == MsgKind::VcPayload) {
    ++counters_.payload_link_sends;
    counters_.ctrl_bytes_sum += cb;
    if (counters_.payload_link_sends == 1) {
      counters_.ctrl_bytes_min = counters_.ctrl_bytes_max = cb;
    } else {
      counters_.ctrl_bytes_min = std::min<std::uint64_t>(counters_.ctrl_bytes_min, cb);
      counters_.ctrl_bytes_max = std::max<std::uint64_t>(counters_.ctrl_bytes_max, cb);
    }
  }
  if (trace_hop(mk)) {
    const auto [o, c] = trace_identity(msg);
    trace_.emit({now_, Ev::Send, mk, cb, from, to, o, c, 0});
  }
  QEv ev;
  ev.t = arrival;
  ev.k = QEv::K::LinkMsg;
  ev.a = from;
  ev.b = to;
  ev.msg = msg;
  push(std::move(ev));
}

void Sim::direct_send(ProcessId from, ProcessId to, const ProtocolMessage& msg) {
  Proc& sender = procs_.at(from);
  if (sender.drop_pongs > 0 && std::holds_alternative<Pong>(msg)) {
    --sender.drop_pongs;
    ++counters_.dropped_pongs;
    return;
  }
  const MsgKind mk = kind_of(msg);
  if (trace_hop(mk)) {
    const auto [o, c] = trace_identity(msg);
    trace_.emit({now_, Ev::Send, mk, static_cast<std::uint16_t>(control_size(msg)), from, to, o, c, 1});
  }
  QEv ev;
  ev.t = now_ + sc_.direct_latency_ms;
  ev.k = QEv::K::DirectMsg;
  ev.a = from;
  ev.b = to;
  ev.msg = msg;
  push(std::move(ev));
}

void Sim::on_deliver(ProcessId p, const Payload& payload) {
  ++counters_.deliveries;
  trace_.emit({now_, Ev::Deliver, MsgKind::Payload, 0, p, 0, payload.id.origin, payload.id.counter, 0});
}

void Sim::arm_timer(ProcessId p, std::uint64_t phase) {
  QEv ev;
  ev.t = now_ + timer_duration_;
  ev.k = QEv::K::Timer;
  ev.a = p;
  ev.phase = phase;
  push(std::move(ev));
}

void Sim::on_note(ProcessId p, Ev kind, ProcessId peer, MessageId msg, std::uint64_t aux) {
  switch (kind) {
    case Ev::Broadcast: ++counters_.broadcasts; break;
    case Ev::PingSent: ++counters_.ping_phases; break;
    case Ev::PhaseRetry: ++counters_.retries; break;
    case Ev::LinkAbandoned: ++counters_.abandoned_links; break;
    case Ev::TimeoutFired: ++counters_.timeouts_fired; break;
    default: break;
  }
  const MsgKind mk = kind == Ev::Broadcast ? MsgKind::Payload : MsgKind::None;
  trace_.emit({now_, kind, mk, 0, p, peer, msg.origin, msg.counter, aux});
}

void Sim::snapshot(TimeMs t) {
  MetricsRow row;
  row.time_ms = t;
  row.ramp_factor = ramp_ceiling(t);
  const std::vector<ProcessId> alive = alive_ids();
  std::map<ProcessId, std::vector<ProcessId>> safe_adj;
  std::map<ProcessId, std::vector<ProcessId>> all_adj;
  double unsafe_sum = 0.0;
  std::size_t buffered_total = 0, buffer_count = 0, buffer_max = 0;
  double pending_sum = 0.0;
  for (ProcessId p : alive) {
    const Proc& pr = procs_.at(p);
    for (ProcessId q : pr.proto->safe_neighbors())
      if (alive_set_contains(alive, q)) safe_adj[p].push_back(q);
    for (ProcessId q : pr.view)
      if (alive_set_contains(alive, q)) all_adj[p].push_back(q);
    unsafe_sum += static_cast<double>(pr.proto->unsafe_link_count());
    buffer_count += pr.proto->unsafe_link_count();
    const auto [total, largest] = pr.proto->buffer_stats();
    buffered_total += total;
    buffer_max = std::max(buffer_max, largest);
    pending_sum += static_cast<double>(pr.proto->pending_count());
  }
  // Sample BFS sources without replacement.
  std::vector<ProcessId> pool = alive;
  const std::size_t k = std::min<std::size_t>(sc_.path_sample_sources, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng_metrics_.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  row.avg_sp_safe = avg_shortest_path(safe_adj, pool, alive);
  row.avg_sp_all = avg_shortest_path(all_adj, pool, alive);
  const double n_alive = std::max<double>(1.0, static_cast<double>(alive.size()));
  row.avg_unsafe_links = unsafe_sum / n_alive;
  row.avg_buffer = buffer_count == 0 ? 0.0 : static_cast<double>(buffered_total) / static_cast<double>(buffer_count);
  row.max_buffer = buffer_max;
  row.ctrl_bytes_payload = counters_.payload_link_sends == 0
                               ? 0.0
                               : counters_.ctrl_bytes_sum / static_cast<double>(counters_.payload_link_sends);
  row.vc_pending = pending_sum / n_alive;
  metrics_.rows.push_back(row);
}

void Sim::dispatch(QEv& ev) {
  switch (ev.k) {
    case QEv::K::LinkMsg: {
      const auto it = links_.find(norm(ev.a, ev.b));
      if (it == links_.end() || it->second.dead) return;  // lost with the crash
      auto pit = procs_.find(ev.b);
      if (pit == procs_.end() || pit->second.departed) return;
      const MsgKind mk = kind_of(ev.msg);
      if (trace_hop(mk)) {
        const auto [o, c] = trace_identity(ev.msg);
        trace_.emit({now_, Ev::Receive, mk, static_cast<std::uint16_t>(control_size(ev.msg)), ev.b, ev.a, o, c, 0});
      }
      pit->second.proto->on_message(ev.a, ev.msg);
      return;
    }
    case QEv::K::DirectMsg: {
      auto pit = procs_.find(ev.b);
      if (pit == procs_.end() || pit->second.departed) return;
      const MsgKind mk = kind_of(ev.msg);
      if (trace_hop(mk)) {
        const auto [o, c] = trace_identity(ev.msg);
        trace_.emit({now_, Ev::Receive, mk, static_cast<std::uint16_t>(control_size(ev.msg)), ev.b, ev.a, o, c, 1});
      }
      pit->second.proto->on_message(ev.a, ev.msg);
      return;
    }
    case QEv::K::Timer: {
      auto pit = procs_.find(ev.a);
      if (pit == procs_.end() || pit->second.departed) return;
      pit->second.proto->on_timeout(ev.phase);
      return;
    }
    case QEv::K::Action:
      exec_action(schedule_[static_cast<std::size_t>(ev.action_idx)]);
      return;
    case QEv::K::Shuffle:
      exec_shuffle(ev.a);
      return;
    case QEv::K::Snapshot:
      snapshot(ev.t);
      return;
    case QEv::K::Work: {
      auto pit = procs_.find(ev.a);
      if (pit == procs_.end() || pit->second.departed) return;
      pit->second.proto->broadcast("");
      return;
    }
  }
}

RunResult Sim::run() {
  setup();
  while (!queue_.empty()) {
    QEv ev = queue_.top();
    queue_.pop();
    if (ev.t > time_limit_) {
      quiescent_ = false;
      outcome_ = "time_limit_exceeded";
      break;
    }
    now_ = ev.t;
    last_event_t_ = ev.t;
    ++counters_.events_processed;
    dispatch(ev);
  }
  now_ = std::max(last_event_t_, sc_.duration_ms);
  snapshot(now_);

  metrics_.ping_phases = counters_.ping_phases;
  metrics_.retries = counters_.retries;
  metrics_.abandoned_links = counters_.abandoned_links;

  RunResult result;
  for (const auto& [pid, pr] : procs_) {
    const DeliveryStats& d = pr.proto->delivery_stats();
    result.delivery.payload_receives += d.payload_receives;
    result.delivery.scan_touches += d.scan_touches;
    result.delivery.max_scan_single = std::max(result.delivery.max_scan_single, d.max_scan_single);
  }
  result.trace = std::move(trace_);
  result.metrics = std::move(metrics_);
  result.counters = counters_;
  result.quiescent = quiescent_;
  result.outcome = outcome_;
  return result;
}

}  // namespace

RunResult run_simulation(const Scenario& scenario) {
  validate(scenario);
  Sim sim(scenario);
  return sim.run();
}

}  // namespace causalmesh
