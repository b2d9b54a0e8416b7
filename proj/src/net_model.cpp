#include "dcfit/net_model.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace dcfit::net {

NodeId Topology::add_node(std::string name, NodeKind kind) {
  if (name.empty()) throw ConfigError("node name must not be empty");
  if (by_name_.contains(name)) throw ConfigError("duplicate node name '" + name + "'");
  NodeId id{static_cast<std::uint32_t>(nodes_.size())};
  by_name_.emplace(name, id);
  nodes_.push_back(Node{std::move(name), kind, {}});
  for (auto& row : routes_) row.push_back(-1);
  routes_.emplace_back(nodes_.size(), -1);
  return id;
}

LinkId Topology::connect(NodeId a, NodeId b, double bandwidth_bps, SimTime delay) {
  if (a == b) throw ConfigError("self-link on node '" + name(a) + "'");
  if (!(bandwidth_bps > 0.0)) throw ConfigError("link bandwidth must be positive");
  if (delay < 0) throw ConfigError("link delay must be non-negative");
  auto& na = nodes_.at(a.value);
  auto& nb = nodes_.at(b.value);
  if (na.kind == NodeKind::kServer && !na.ports.empty())
    throw ConfigError("server '" + na.name + "' already has its single port");
  if (nb.kind == NodeKind::kServer && !nb.ports.empty())
    throw ConfigError("server '" + nb.name + "' already has its single port");
  LinkId id{static_cast<std::uint32_t>(links_.size())};
  PortRef pa{a, PortId{static_cast<std::uint16_t>(na.ports.size())}};
  PortRef pb{b, PortId{static_cast<std::uint16_t>(nb.ports.size())}};
  na.ports.push_back(id);
  nb.ports.push_back(id);
  links_.push_back(Link{pa, pb, bandwidth_bps, delay, true});
  return id;
}

const Topology::Node& Topology::node_at(NodeId id) const {
  if (id.value >= nodes_.size()) throw ConfigError("unknown node id " + std::to_string(id.value));
  return nodes_[id.value];
}

std::size_t Topology::max_port_count() const {
  std::size_t best = 0;
  for (const auto& n : nodes_) best = std::max(best, n.ports.size());
  return best;
}

std::optional<NodeId> Topology::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

NodeId Topology::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw ConfigError("unknown node '" + std::string(name) + "'");
}

const Link& Topology::link(LinkId id) const {
  if (id.value >= links_.size()) throw ConfigError("unknown link id " + std::to_string(id.value));
  return links_[id.value];
}

std::optional<LinkId> Topology::link_at(PortRef ref) const {
  const auto& n = node_at(ref.node);
  if (ref.port.value >= n.ports.size()) return std::nullopt;
  return n.ports[ref.port.value];
}

PortRef Topology::peer(PortRef ref) const {
  auto id = link_at(ref);
  if (!id) {
    throw ConfigError("dangling port " + std::to_string(ref.port.value) + " on '" +
                      name(ref.node) + "'");
  }
  const auto& l = links_[id->value];
  return l.a == ref ? l.b : l.a;
}

std::optional<PortId> Topology::port_toward(NodeId from, NodeId neighbor) const {
  const auto& n = node_at(from);
  for (std::size_t p = 0; p < n.ports.size(); ++p) {
    const auto& l = links_[n.ports[p].value];
    if ((l.a.node == from && l.b.node == neighbor) || (l.b.node == from && l.a.node == neighbor))
      return PortId{static_cast<std::uint16_t>(p)};
  }
  return std::nullopt;
}

std::optional<LinkId> Topology::link_between(NodeId a, NodeId b) const {
  auto port = port_toward(a, b);
  if (!port) return std::nullopt;
  return link_at(PortRef{a, *port});
}

bool Topology::port_up(PortRef ref) const {
  auto id = link_at(ref);
  return id && links_[id->value].up;
}

std::vector<NodeId> Topology::servers() const {
  std::vector<NodeId> out;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == NodeKind::kServer) out.push_back(NodeId{i});
  return out;
}

std::vector<NodeId> Topology::switches() const {
  std::vector<NodeId> out;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == NodeKind::kSwitch) out.push_back(NodeId{i});
  return out;
}

void Topology::set_route(NodeId node, NodeId destination, PortId port) {
  if (node == destination)
    throw ConfigError("self route entry on '" + name(node) + "'");
  if (port.value >= port_count(node)) {
    throw ConfigError("route on '" + name(node) + "' references missing port " +
                      std::to_string(port.value));
  }
  node_at(destination);
  routes_[node.value][destination.value] = port.value;
}

void Topology::clear_route(NodeId node, NodeId destination) {
  node_at(node);
  node_at(destination);
  routes_[node.value][destination.value] = -1;
}

std::optional<PortId> Topology::route(NodeId node, NodeId destination) const {
  node_at(node);
  node_at(destination);
  auto p = routes_[node.value][destination.value];
  if (p < 0) return std::nullopt;
  return PortId{static_cast<std::uint16_t>(p)};
}

std::size_t Topology::route_entry_count() const {
  std::size_t n = 0;
  for (const auto& row : routes_)
    n += static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](auto p) { return p >= 0; }));
  return n;
}

std::size_t Topology::fail_link(LinkId id, std::span<const RouteOverride> overrides) {
  auto& l = links_.at(id.value);
  if (!l.up) {
    throw ScenarioError("link " + name(l.a.node) + "-" + name(l.b.node) + " is already down");
  }
  l.up = false;
  std::size_t changed = 0;
  for (const auto& o : overrides) {
    auto before = route(o.node, o.destination);
    set_route(o.node, o.destination, o.port);
    if (!before || *before != o.port) ++changed;
  }
  return changed;
}

std::optional<std::vector<NodeId>> Topology::walk(NodeId from, NodeId destination) const {
  std::vector<NodeId> path{from};
  NodeId at = from;
  while (at != destination) {
    auto port = next_hop(*this, at, destination);
    if (!port) return std::nullopt;
    at = peer(PortRef{at, *port}).node;
    path.push_back(at);
    if (path.size() > nodes_.size() + 1) return std::nullopt;
  }
  return path;
}

std::vector<std::pair<NodeId, NodeId>> Topology::unreachable_server_pairs() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  auto hosts = servers();
  for (auto s : hosts)
    for (auto d : hosts)
      if (s != d && !walk(s, d)) out.emplace_back(s, d);
  return out;
}

void Topology::validate() const {
  std::set<PortRef> seen;
  for (const auto& l : links_) {
    if (!(l.bandwidth_bps > 0.0)) throw ConfigError("link bandwidth must be positive");
    if (l.delay < 0) throw ConfigError("link delay must be non-negative");
    for (const auto& end : {l.a, l.b}) {
      if (!seen.insert(end).second) {
        throw ConfigError("port " + std::to_string(end.port.value) + " of '" + name(end.node) +
                          "' is attached to more than one link");
      }
    }
  }
  for (std::uint32_t n = 0; n < nodes_.size(); ++n) {
    for (std::uint32_t d = 0; d < nodes_.size(); ++d) {
      auto p = routes_[n][d];
      if (p < 0) continue;
      if (n == d) throw ConfigError("self route entry on '" + nodes_[n].name + "'");
      if (static_cast<std::size_t>(p) >= nodes_[n].ports.size())
        throw ConfigError("route on '" + nodes_[n].name + "' references missing port");
    }
  }
}

std::optional<PortId> next_hop(const Topology& topology, NodeId node, NodeId destination) {
  auto port = topology.route(node, destination);
  if (!port || !topology.port_up(PortRef{node, *port})) return std::nullopt;
  return port;
}

namespace {

void route_servers_to_their_switch(Topology& topo) {
  for (auto s : topo.servers()) {
    for (std::uint32_t d = 0; d < topo.node_count(); ++d) {
      if (d != s.value) topo.set_route(s, NodeId{d}, PortId{0});
    }
  }
}

}  // namespace

Topology build_fat_tree(int k, FabricDefaults fabric) {
  if (k < 4 || k % 2 != 0) {
    throw ConfigError("fat-tree arity k must be even and >= 4 (got " + std::to_string(k) + ")");
  }
  const int h = k / 2;
  Topology topo;
  std::vector<NodeId> core, agg, edge, host;
  for (int i = 0; i < h * h; ++i) core.push_back(topo.add_node("c" + std::to_string(i), NodeKind::kSwitch));
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < h; ++j)
      agg.push_back(topo.add_node("a" + std::to_string(p) + "_" + std::to_string(j), NodeKind::kSwitch));
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < h; ++j)
      edge.push_back(topo.add_node("e" + std::to_string(p) + "_" + std::to_string(j), NodeKind::kSwitch));
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < h; ++j)
      for (int s = 0; s < h; ++s)
        host.push_back(topo.add_node(
            "h" + std::to_string(p) + "_" + std::to_string(j) + "_" + std::to_string(s),
            NodeKind::kServer));

  auto agg_of = [&](int pod, int j) { return agg[static_cast<std::size_t>(pod * h + j)]; };
  auto edge_of = [&](int pod, int j) { return edge[static_cast<std::size_t>(pod * h + j)]; };
  // Core j*h+i hangs off aggregation switch j of every pod.
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < h; ++i)
        topo.connect(agg_of(p, j), core[static_cast<std::size_t>(j * h + i)], fabric.bandwidth_bps, fabric.delay);
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < h; ++j)
      for (int e = 0; e < h; ++e)
        topo.connect(agg_of(p, j), edge_of(p, e), fabric.bandwidth_bps, fabric.delay);
  for (int p = 0; p < k; ++p)
    for (int e = 0; e < h; ++e)
      for (int s = 0; s < h; ++s)
        topo.connect(edge_of(p, e), host[static_cast<std::size_t>((p * h + e) * h + s)],
                     fabric.bandwidth_bps, fabric.delay);

  route_servers_to_their_switch(topo);
  for (int idx = 0; idx < static_cast<int>(host.size()); ++idx) {
    const NodeId d = host[static_cast<std::size_t>(idx)];
    const int dpod = idx / (h * h);
    const int dedge = (idx / h) % h;
    const int up_agg = idx % h;
    const int up_core = (idx / h) % h;
    for (int p = 0; p < k; ++p) {
      for (int e = 0; e < h; ++e) {
        NodeId sw = edge_of(p, e);
        NodeId next = (p == dpod && e == dedge) ? d : agg_of(p, up_agg);
        topo.set_route(sw, d, *topo.port_toward(sw, next));
      }
      for (int j = 0; j < h; ++j) {
        NodeId sw = agg_of(p, j);
        NodeId next = p == dpod ? edge_of(dpod, dedge) : core[static_cast<std::size_t>(j * h + up_core)];
        topo.set_route(sw, d, *topo.port_toward(sw, next));
      }
    }
    for (int c = 0; c < h * h; ++c) {
      NodeId sw = core[static_cast<std::size_t>(c)];
      topo.set_route(sw, d, *topo.port_toward(sw, agg_of(dpod, c / h)));
    }
  }
  return topo;
}

Topology build_clos(int spines, int leaves, int servers_per_leaf, FabricDefaults fabric) {
  if (spines < 1 || leaves < 2 || servers_per_leaf < 1)
    throw ConfigError("leaf-spine fabric needs >= 1 spine, >= 2 leaves and >= 1 server per leaf");
  Topology topo;
  std::vector<NodeId> spine, leaf, host;
  for (int j = 0; j < spines; ++j) spine.push_back(topo.add_node("S" + std::to_string(j), NodeKind::kSwitch));
  for (int i = 0; i < leaves; ++i) leaf.push_back(topo.add_node("L" + std::to_string(i), NodeKind::kSwitch));
  for (int i = 0; i < leaves; ++i)
    for (int s = 0; s < servers_per_leaf; ++s)
      host.push_back(topo.add_node("H" + std::to_string(i) + "_" + std::to_string(s), NodeKind::kServer));
  for (auto l : leaf)
    for (auto s : spine) topo.connect(l, s, fabric.bandwidth_bps, fabric.delay);
  for (int i = 0; i < leaves; ++i)
    for (int s = 0; s < servers_per_leaf; ++s)
      topo.connect(leaf[static_cast<std::size_t>(i)], host[static_cast<std::size_t>(i * servers_per_leaf + s)],
                   fabric.bandwidth_bps, fabric.delay);

  route_servers_to_their_switch(topo);
  for (int idx = 0; idx < static_cast<int>(host.size()); ++idx) {
    const NodeId d = host[static_cast<std::size_t>(idx)];
    const NodeId dleaf = leaf[static_cast<std::size_t>(idx / servers_per_leaf)];
    const NodeId up = spine[static_cast<std::size_t>(idx % spines)];
    for (auto l : leaf) topo.set_route(l, d, *topo.port_toward(l, l == dleaf ? d : up));
    for (auto s : spine) topo.set_route(s, d, *topo.port_toward(s, dleaf));
  }
  return topo;
}

Topology build_clos_scenario() { return build_clos(2, 4, 2); }

Topology build_arbitrary(std::span<const NodeSpec> nodes, std::span<const EdgeSpec> edges,
                         std::span<const RouteSpec> routes) {
  Topology topo;
  for (const auto& n : nodes) topo.add_node(n.name, n.kind);
  for (const auto& e : edges) topo.connect(topo.require(e.a), topo.require(e.b), e.bandwidth_bps, e.delay);
  for (auto s : topo.servers()) {
    if (topo.port_count(s) != 1)
      throw ConfigError("server '" + topo.name(s) + "' must have exactly one link");
  }
  route_servers_to_their_switch(topo);
  for (const auto& r : routes) {
    NodeId node = topo.require(r.node);
    NodeId via = topo.require(r.via);
    auto port = topo.port_toward(node, via);
    if (!port) {
      throw ConfigError("route on '" + r.node + "' toward '" + r.destination + "' via '" + r.via +
                        "': no such link");
    }
    topo.set_route(node, topo.require(r.destination), *port);
  }
  topo.validate();
  return topo;
}

namespace {

// Hop distance from every node to `root` over live links, and the port each
// node should use to move one hop closer (lowest port on ties).
struct Bfs {
  std::vector<int> dist;
  std::vector<std::int32_t> toward;
};

Bfs bfs_toward(const Topology& topo, NodeId root, const std::vector<bool>& dead) {
  Bfs out{std::vector<int>(topo.node_count(), -1), std::vector<std::int32_t>(topo.node_count(), -1)};
  std::deque<NodeId> frontier{root};
  out.dist[root.value] = 0;
  while (!frontier.empty()) {
    NodeId at = frontier.front();
    frontier.pop_front();
    // Servers never forward transit traffic.
    if (at != root && topo.is_server(at)) continue;
    for (std::uint16_t p = 0; p < topo.port_count(at); ++p) {
      auto lid = topo.link_at(PortRef{at, PortId{p}});
      if (!lid || dead[lid->value]) continue;
      PortRef far = topo.peer(PortRef{at, PortId{p}});
      if (out.dist[far.node.value] >= 0) continue;
      out.dist[far.node.value] = out.dist[at.value] + 1;
      frontier.push_back(far.node);
    }
  }
  for (std::uint32_t n = 0; n < topo.node_count(); ++n) {
    if (n == root.value || out.dist[n] < 0) continue;
    NodeId node{n};
    for (std::uint16_t p = 0; p < topo.port_count(node); ++p) {
      auto lid = topo.link_at(PortRef{node, PortId{p}});
      if (!lid || dead[lid->value]) continue;
      PortRef far = topo.peer(PortRef{node, PortId{p}});
      if (far.node != root && topo.is_server(far.node)) continue;
      if (out.dist[far.node.value] == out.dist[n] - 1) {
        out.toward[n] = p;
        break;
      }
    }
  }
  return out;
}

}  // namespace

void install_shortest_path_routes(Topology& topology) {
  std::vector<bool> dead(topology.links().size());
  for (std::size_t i = 0; i < dead.size(); ++i) dead[i] = !topology.links()[i].up;
  for (auto d : topology.servers()) {
    auto tree = bfs_toward(topology, d, dead);
    for (std::uint32_t n = 0; n < topology.node_count(); ++n) {
      if (n == d.value || tree.toward[n] < 0) continue;
      if (topology.is_server(NodeId{n})) continue;
      topology.set_route(NodeId{n}, d, PortId{static_cast<std::uint16_t>(tree.toward[n])});
    }
  }
}

std::vector<RouteOverride> plan_detours(const Topology& topology, std::span<const LinkId> failed) {
  Topology hypothetical = topology;
  std::vector<bool> dead(topology.links().size());
  for (std::size_t i = 0; i < dead.size(); ++i) dead[i] = !topology.links()[i].up;
  for (auto id : failed) {
    if (!hypothetical.link_up(id)) continue;
    hypothetical.fail_link(id, {});
    dead[id.value] = true;
  }
  std::vector<RouteOverride> out;
  for (auto d : topology.servers()) {
    std::optional<Bfs> tree;
    for (std::uint32_t n = 0; n < topology.node_count(); ++n) {
      NodeId node{n};
      if (node == d || topology.is_server(node)) continue;
      if (!topology.route(node, d)) continue;
      if (hypothetical.walk(node, d)) continue;
      if (!tree) tree = bfs_toward(topology, d, dead);
      if (tree->toward[n] < 0) continue;  // partitioned: stays unreachable
      out.push_back(RouteOverride{node, d, PortId{static_cast<std::uint16_t>(tree->toward[n])}});
    }
  }
  return out;
}

}  // namespace dcfit::net
