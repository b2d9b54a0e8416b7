#include "dcfit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dcfit::oracle {

std::optional<std::size_t> WaitForGraph::index_of(PortRef port) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), port);
  if (it == nodes.end() || *it != port) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

bool WaitForGraph::has_edge(PortRef from, PortRef to) const {
  auto a = index_of(from);
  auto b = index_of(to);
  if (!a || !b) return false;
  const auto& out = edges[*a];
  return std::find(out.begin(), out.end(), *b) != out.end();
}

WaitForGraph build_wait_for_graph(const sim::Simulator& state) {
  const auto& topo = state.topology();
  WaitForGraph g;
  for (std::uint32_t n = 0; n < topo.node_count(); ++n) {
    const auto& ns = state.node(NodeId{n});
    for (std::uint16_t p = 0; p < ns.egress.size(); ++p) {
      const auto& q = ns.egress[p];
      if (q.paused && q.honor_pause) g.nodes.push_back(PortRef{NodeId{n}, PortId{p}});
    }
  }
  g.edges.resize(g.nodes.size());
  for (std::size_t a = 0; a < g.nodes.size(); ++a) {
    const PortRef far = topo.peer(g.nodes[a]);
    if (topo.is_server(far.node)) continue;
    const auto& b = state.node(far.node);
    if (!b.ingress[far.port.value].pausing_upstream) continue;
    for (std::uint16_t q = 0; q < b.egress.size(); ++q) {
      const auto& eq = b.egress[q];
      if (!eq.paused || !eq.honor_pause) continue;
      bool holds = eq.in_service && eq.in_service->ingress == far.port;
      for (std::size_t k = 0; !holds && k < eq.fifo.size(); ++k) holds = eq.fifo[k].ingress == far.port;
      if (holds) g.edges[a].push_back(*g.index_of(PortRef{far.node, PortId{q}}));
    }
  }
  return g;
}

std::vector<Cycle> snapshot_cbd(const sim::Simulator& state, std::size_t limit) {
  const auto g = build_wait_for_graph(state);
  std::vector<Cycle> cycles;
  std::vector<std::size_t> path;
  std::vector<bool> on_path(g.nodes.size(), false);
  std::size_t budget = 1'000'000;
  // Depth-first search per start node over higher-indexed nodes only, so each
  // elementary cycle is found once, rooted at its smallest port.
  for (std::size_t s = 0; s < g.nodes.size() && cycles.size() < limit; ++s) {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{s, 0}};
    path.assign(1, s);
    on_path[s] = true;
    while (!stack.empty() && cycles.size() < limit && budget > 0) {
      --budget;
      auto& [v, next] = stack.back();
      if (next >= g.edges[v].size()) {
        on_path[v] = false;
        path.pop_back();
        stack.pop_back();
        continue;
      }
      const std::size_t w = g.edges[v][next++];
      if (w == s) {
        Cycle c;
        for (auto idx : path) c.push_back(g.nodes[idx]);
        cycles.push_back(std::move(c));
      } else if (w > s && !on_path[w]) {
        on_path[w] = true;
        path.push_back(w);
        stack.emplace_back(w, 0);
      }
    }
    for (auto idx : path) on_path[idx] = false;
  }
  return cycles;
}

bool confirm_deadlock(const sim::Simulator& state, const Cycle& cycle, SimTime probe_window) {
  if (cycle.empty()) return false;
  auto probe = state.probe_clone();
  std::vector<std::uint64_t> departures;
  std::vector<std::uint64_t> resumes;
  for (const auto& port : cycle) {
    const auto& q = probe.node(port.node).egress.at(port.port.value);
    if (!q.paused) return false;
    departures.push_back(q.departures);
    resumes.push_back(q.resumes_received);
    std::set<std::uint32_t> flows;
    for (const auto& p : q.fifo) flows.insert(p.flow.value);
    if (q.in_service) flows.insert(q.in_service->flow.value);
    for (auto f : flows) probe.freeze_flow(FlowId{f});
  }
  // Servers sink freely during the probe so a pausing server cannot hold the cycle.
  const auto& topo = probe.topology();
  for (std::uint32_t n = 0; n < topo.node_count(); ++n) {
    const NodeId node{n};
    if (topo.is_server(node)) continue;
    for (std::uint16_t p = 0; p < topo.port_count(node); ++p) {
      const PortRef ref{node, PortId{p}};
      if (topo.is_server(topo.peer(ref).node)) probe.mute_pause(ref);
    }
  }
  probe.run_until(probe.now() + probe_window);
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const auto& q = probe.node(cycle[i].node).egress.at(cycle[i].port.value);
    if (q.departures != departures[i] || q.resumes_received != resumes[i] || !q.paused) return false;
  }
  return true;
}

SimTime default_probe_window(const net::Topology& topology, const sim::PfcConfig& pfc) {
  SimTime longest_rtt = 0;
  double slowest = 0.0;
  for (const auto& l : topology.links()) {
    longest_rtt = std::max(longest_rtt, 2 * l.delay);
    slowest = slowest == 0.0 ? l.bandwidth_bps : std::min(slowest, l.bandwidth_bps);
  }
  SimTime drain = 0;
  if (slowest > 0.0)
    drain = static_cast<SimTime>(std::ceil(static_cast<double>(pfc.buffer_bytes) * 8.0 * 1e9 / slowest));
  return std::max(10 * longest_rtt, drain);
}

Cycle cycle_from_report(const detect::DeadlockReport& report) {
  Cycle c(report.loop_ports.rbegin(), report.loop_ports.rend());
  if (!c.empty()) std::rotate(c.begin(), std::min_element(c.begin(), c.end()), c.end());
  return c;
}

bool is_cycle(const WaitForGraph& graph, const Cycle& cycle) {
  if (cycle.empty()) return false;
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (!graph.has_edge(cycle[i], cycle[(i + 1) % cycle.size()])) return false;
  }
  return true;
}

SimTime formation_time(const sim::Simulator& state, const Cycle& cycle) {
  SimTime t = 0;
  for (const auto& p : cycle) t = std::max(t, state.node(p.node).egress.at(p.port.value).paused_since);
  return t;
}

bool Oracle::confirm(const sim::Simulator& state, const Cycle& cycle) {
  std::vector<std::pair<PortRef, SimTime>> key;
  for (const auto& p : cycle) key.emplace_back(p, state.node(p.node).egress.at(p.port.value).paused_since);
  std::sort(key.begin(), key.end());
  if (auto it = confirmed_.find(key); it != confirmed_.end()) return it->second;
  ++probes_;
  const bool verdict = confirm_deadlock(state, cycle, window_);
  // Only positive verdicts are stable while the ports stay paused.
  if (verdict) confirmed_.emplace(std::move(key), true);
  return verdict;
}

OracleSample Oracle::sample(const sim::Simulator& state) {
  OracleSample s;
  s.time = state.now();
  s.context = "periodic";
  s.cycles = snapshot_cbd(state);
  for (const auto& c : s.cycles) {
    s.formed.push_back(formation_time(state, c));
    s.confirmed.push_back(confirm(state, c));
  }
  return s;
}

OracleSample Oracle::check_report(const sim::Simulator& state, const detect::DeadlockReport& report,
                                  std::size_t index) {
  OracleSample s;
  s.time = state.now();
  s.context = "report";
  s.report_index = index;
  const auto cycle = cycle_from_report(report);
  const auto graph = build_wait_for_graph(state);
  const bool genuine = is_cycle(graph, cycle) && confirm(state, cycle);
  s.cycles.push_back(cycle);
  s.formed.push_back(formation_time(state, cycle));
  s.confirmed.push_back(genuine);
  return s;
}

namespace {

bool overlaps(const std::vector<PortRef>& a, const std::vector<PortRef>& b) {
  for (const auto& p : a)
    if (std::find(b.begin(), b.end(), p) != b.end()) return true;
  return false;
}

void merge_ports(std::vector<PortRef>& into, const std::vector<PortRef>& from) {
  for (const auto& p : from)
    if (std::find(into.begin(), into.end(), p) == into.end()) into.push_back(p);
  std::sort(into.begin(), into.end());
}

}  // namespace

Adjudication adjudicate(const std::vector<detect::DeadlockReport>& reports, const std::vector<OracleSample>& log,
                        const std::vector<InterventionLog>& interventions, SimTime end, SimTime grace) {
  Adjudication out;
  out.report_true.assign(reports.size(), false);
  out.latencies.assign(reports.size(), -1);
  auto& incidents = out.incidents;
  std::vector<std::size_t> open;

  auto observe = [&](const Cycle& cycle, SimTime t, SimTime formed) -> std::size_t {
    for (auto idx : open) {
      if (overlaps(incidents[idx].ports, cycle)) {
        merge_ports(incidents[idx].ports, cycle);
        incidents[idx].last_seen = t;
        incidents[idx].formed = std::min(incidents[idx].formed, formed);
        return idx;
      }
    }
    Incident inc;
    inc.ports = cycle;
    std::sort(inc.ports.begin(), inc.ports.end());
    inc.formed = formed;
    inc.first_seen = t;
    inc.last_seen = t;
    incidents.push_back(std::move(inc));
    open.push_back(incidents.size() - 1);
    return incidents.size() - 1;
  };
  auto close = [&](std::size_t idx, SimTime t, const char* reason) {
    incidents[idx].closed = t;
    incidents[idx].close_reason = reason;
    open.erase(std::find(open.begin(), open.end(), idx));
  };

  std::size_t next_intervention = 0;
  auto apply_interventions = [&](SimTime upto) {
    while (next_intervention < interventions.size() && interventions[next_intervention].time <= upto) {
      const auto& iv = interventions[next_intervention++];
      for (auto idx : std::vector<std::size_t>(open)) {
        if (!overlaps(incidents[idx].ports, iv.ports)) continue;
        if (iv.scripted && incidents[idx].reports.empty()) incidents[idx].preempted = true;
        close(idx, iv.time, iv.scripted ? "intervention" : "recovery");
      }
    }
  };

  for (const auto& s : log) {
    apply_interventions(s.time);
    if (s.context == "report") {
      const auto r = *s.report_index;
      if (!s.confirmed.empty() && s.confirmed[0]) {
        const auto idx = observe(s.cycles[0], s.time, s.formed[0]);
        out.report_true[r] = true;
        incidents[idx].reports.push_back(r);
        out.latencies[r] = std::max<SimTime>(0, reports[r].t_confirmed - incidents[idx].formed);
      }
      continue;
    }
    std::set<std::size_t> seen;
    for (std::size_t c = 0; c < s.cycles.size(); ++c) {
      if (s.confirmed[c]) seen.insert(observe(s.cycles[c], s.time, s.formed[c]));
    }
    for (auto idx : std::vector<std::size_t>(open)) {
      if (!seen.contains(idx)) close(idx, s.time, "vanished");
    }
  }
  apply_interventions(end);

  for (bool t : out.report_true) t ? ++out.true_positives : ++out.false_positives;
  for (auto& inc : incidents) {
    if (!inc.reports.empty() || inc.preempted) continue;
    if (!inc.closed && inc.first_seen > end - grace) {
      inc.pending = true;
      continue;
    }
    inc.false_negative = true;
    ++out.false_negatives;
  }
  return out;
}

}  // namespace dcfit::oracle
