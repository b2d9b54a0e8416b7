#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dcfit/runner.hpp"

namespace testkit {

using namespace dcfit;

/// Hop distances from `from` over live links, by plain BFS.
inline std::map<std::uint32_t, int> bfs_distances(const net::Topology& t, NodeId from) {
  std::map<std::uint32_t, int> dist{{from.value, 0}};
  std::vector<NodeId> frontier{from};
  while (!frontier.empty()) {
    std::vector<NodeId> next;
    for (auto n : frontier) {
      for (const auto& l : t.links()) {
        if (!l.up) continue;
        NodeId other;
        if (l.a.node == n) other = l.b.node;
        else if (l.b.node == n) other = l.a.node;
        else continue;
        if (dist.count(other.value)) continue;
        dist[other.value] = dist[n.value] + 1;
        next.push_back(other);
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

inline std::map<std::pair<std::uint32_t, std::uint32_t>, int> route_snapshot(const net::Topology& t) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> out;
  for (std::uint32_t n = 0; n < t.node_count(); ++n) {
    for (auto d : t.servers()) {
      auto p = t.route(NodeId{n}, d);
      out[{n, d.value}] = p ? p->value : -1;
    }
  }
  return out;
}

inline bool walk_uses_link(const net::Topology& t, const std::vector<NodeId>& path, LinkId link) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    auto l = t.link_between(path[i], path[i + 1]);
    if (l && *l == link) return true;
  }
  return false;
}

inline std::vector<const TraceRecord*> records(const Trace& trace, const std::string& kind) {
  std::vector<const TraceRecord*> out;
  for (const auto& r : trace.records())
    if (r.kind == kind) out.push_back(&r);
  return out;
}

inline sim::Simulator make_sim(const scenario::Scenario& sc) {
  return sim::Simulator(sc.topology, sc.flows, sc.failures, sc.misbehaving, sc.config);
}

/// Runs until the first detector report. Returns false if none came by `until`.
inline bool run_to_first_report(sim::Simulator& s, SimTime until, detect::DeadlockReport& out) {
  s.set_stop_on_report(true);
  while (s.now() < until) {
    const bool stopped = s.run_until(until);
    auto reps = s.take_reports();
    if (!reps.empty()) {
      out = reps.front();
      return true;
    }
    if (!stopped) break;
  }
  return false;
}

inline scenario::Scenario with_yaml_patch(const std::string& name, const std::string& from, const std::string& to) {
  std::string text(*scenario::builtin_text(name));
  const auto pos = text.find(from);
  if (pos == std::string::npos) throw std::runtime_error("patch anchor not found: " + from);
  text.replace(pos, from.size(), to);
  return scenario::parse_scenario(text, name);
}

}  // namespace testkit
