#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcfit/common.hpp"

namespace dcfit::net {

struct Link {
  PortRef a;
  PortRef b;
  double bandwidth_bps = 10e9;
  SimTime delay = kMicrosecond;
  bool up = true;
};

/// Replacement routing entry applied when a link fails.
struct RouteOverride {
  NodeId node;
  NodeId destination;
  PortId port;
  friend bool operator==(const RouteOverride&, const RouteOverride&) = default;
};

/// Switches, servers, full-duplex links and a single-path routing table.
///
/// Ports are allocated densely per node in the order links are connected.
/// Routing is keyed by destination node; a missing entry means unreachable.
class Topology {
 public:
  NodeId add_node(std::string name, NodeKind kind);
  LinkId connect(NodeId a, NodeId b, double bandwidth_bps, SimTime delay);

  std::size_t node_count() const { return nodes_.size(); }
  const std::string& name(NodeId node) const { return node_at(node).name; }
  NodeKind kind(NodeId node) const { return node_at(node).kind; }
  bool is_server(NodeId node) const { return kind(node) == NodeKind::kServer; }
  std::size_t port_count(NodeId node) const { return node_at(node).ports.size(); }
  std::size_t max_port_count() const;
  std::optional<NodeId> find(std::string_view name) const;
  NodeId require(std::string_view name) const;

  std::span<const Link> links() const { return links_; }
  const Link& link(LinkId id) const;
  std::optional<LinkId> link_at(PortRef ref) const;
  /// The far end of the link attached to `ref`.
  PortRef peer(PortRef ref) const;
  std::optional<PortId> port_toward(NodeId from, NodeId neighbor) const;
  std::optional<LinkId> link_between(NodeId a, NodeId b) const;
  bool link_up(LinkId id) const { return link(id).up; }
  bool port_up(PortRef ref) const;

  std::vector<NodeId> servers() const;
  std::vector<NodeId> switches() const;

  void set_route(NodeId node, NodeId destination, PortId port);
  void clear_route(NodeId node, NodeId destination);
  /// Raw routing table entry, ignoring link state.
  std::optional<PortId> route(NodeId node, NodeId destination) const;
  std::size_t route_entry_count() const;

  /// Marks the link down and applies `overrides`. Returns the number of
  /// routing entries whose egress port actually changed.
  std::size_t fail_link(LinkId id, std::span<const RouteOverride> overrides);

  /// Follows the routing table from `from` to `destination` over live links.
  /// Returns nullopt on a missing entry, dead link or forwarding loop.
  std::optional<std::vector<NodeId>> walk(NodeId from, NodeId destination) const;
  /// Server pairs with no working route. Empty for every generator before failures.
  std::vector<std::pair<NodeId, NodeId>> unreachable_server_pairs() const;

  /// Checks port uniqueness, positive bandwidth and that routes reference real ports.
  void validate() const;

 private:
  struct Node {
    std::string name;
    NodeKind kind;
    std::vector<LinkId> ports;
  };
  const Node& node_at(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::unordered_map<std::string, NodeId> by_name_;
  // routes_[node][destination] = port or -1
  std::vector<std::vector<std::int32_t>> routes_;
};

/// Egress port for `destination` at `node`, or nullopt when the entry is
/// missing or points at a dead link.
std::optional<PortId> next_hop(const Topology& topology, NodeId node, NodeId destination);

struct FabricDefaults {
  double bandwidth_bps = 10e9;
  SimTime delay = kMicrosecond;
};

/// Standard k-ary fat-tree with deterministic destination-hashed up-down routing.
/// Names: cores `c<i>`, aggregation `a<pod>_<j>`, edge `e<pod>_<j>`,
/// servers `h<pod>_<edge>_<s>`.
Topology build_fat_tree(int k, FabricDefaults fabric = {});

/// Two-tier leaf-spine fabric with up-down routing. Names: spines `S<j>`,
/// leaves `L<i>`, servers `H<leaf>_<s>`.
Topology build_clos(int spines, int leaves, int servers_per_leaf, FabricDefaults fabric = {});

/// The small leaf-spine instance used by the on-loop scenarios: 2 spines,
/// 4 leaves, 2 servers per leaf.
Topology build_clos_scenario();

struct NodeSpec {
  std::string name;
  NodeKind kind = NodeKind::kSwitch;
};

struct EdgeSpec {
  std::string a;
  std::string b;
  double bandwidth_bps = 10e9;
  SimTime delay = kMicrosecond;
};

/// `via` names the neighbor the packet is handed to.
struct RouteSpec {
  std::string node;
  std::string destination;
  std::string via;
};

/// Hand-built topology with an explicit routing table.
Topology build_arbitrary(std::span<const NodeSpec> nodes, std::span<const EdgeSpec> edges,
                         std::span<const RouteSpec> routes);

/// Shortest-path routes toward every server (BFS by hop count, lowest port
/// wins ties). Used for generated topologies that have no structured routing.
void install_shortest_path_routes(Topology& topology);

/// Detour entries for a failure of `failed` links: every (node, destination)
/// pair whose current walk crosses a failed link is re-pointed along a
/// shortest surviving path. Pairs whose walk is unaffected are left alone.
std::vector<RouteOverride> plan_detours(const Topology& topology, std::span<const LinkId> failed);

}  // namespace dcfit::net
