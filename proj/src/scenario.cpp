#include "dcfit/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace dcfit::scenario {

namespace {

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& msg) const {
    std::string where = origin_;
    if (at.IsDefined() && at.Mark().line >= 0) where += ":" + std::to_string(at.Mark().line + 1);
    throw ConfigError(where + ": " + field + ": " + msg);
  }

  void keys(const YAML::Node& map, const std::string& where, std::initializer_list<std::string_view> allowed) const {
    if (!map.IsMap()) fail(map, where, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        fail(kv.first, join(where, key), "unknown field");
    }
  }

  template <class T>
  std::optional<T> opt(const YAML::Node& map, const char* key, const std::string& where) const {
    const YAML::Node n = map[key];
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, join(where, key), "wrong type");
    }
  }

  template <class T>
  T get(const YAML::Node& map, const char* key, const std::string& where, T fallback) const {
    return opt<T>(map, key, where).value_or(fallback);
  }

  template <class T>
  T need(const YAML::Node& map, const char* key, const std::string& where) const {
    auto v = opt<T>(map, key, where);
    if (!v) fail(map, join(where, key), "required field missing");
    return *v;
  }

  YAML::Node section(const YAML::Node& map, const char* key, const std::string& where, bool sequence) const {
    YAML::Node n = map[key];
    if (!n.IsDefined() || n.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    if (sequence ? !n.IsSequence() : !n.IsMap())
      fail(n, join(where, key), sequence ? "expected a list" : "expected a mapping");
    return n;
  }

  static std::string join(const std::string& where, std::string_view key) {
    return where.empty() ? std::string(key) : where + "." + std::string(key);
  }

 private:
  std::string origin_;
};

SimTime us_field(const Reader& r, const YAML::Node& map, const char* key, const std::string& where,
                 SimTime fallback) {
  auto v = r.opt<double>(map, key, where);
  if (!v) return fallback;
  if (*v < 0) r.fail(map[key], Reader::join(where, key), "must be non-negative");
  return from_us(*v);
}

double positive(const Reader& r, const YAML::Node& map, const char* key, const std::string& where,
                double fallback) {
  auto v = r.opt<double>(map, key, where);
  if (!v) return fallback;
  if (!(*v > 0)) r.fail(map[key], Reader::join(where, key), "must be positive");
  return *v;
}

NodeId node_named(const Reader& r, const net::Topology& topo, const YAML::Node& at, const std::string& field,
                  const std::string& name) {
  auto id = topo.find(name);
  if (!id) r.fail(at, field, "unknown node '" + name + "'");
  return *id;
}

PortId port_toward(const Reader& r, const net::Topology& topo, const YAML::Node& at, const std::string& field,
                   NodeId from, NodeId neighbor) {
  auto p = topo.port_toward(from, neighbor);
  if (!p) r.fail(at, field, "no link between '" + topo.name(from) + "' and '" + topo.name(neighbor) + "'");
  return *p;
}

std::pair<NodeId, NodeId> node_pair(const Reader& r, const net::Topology& topo, const YAML::Node& n,
                                    const std::string& field) {
  if (!n.IsSequence() || n.size() != 2) r.fail(n, field, "expected [node, neighbor]");
  auto a = node_named(r, topo, n, field, n[0].as<std::string>());
  auto b = node_named(r, topo, n, field, n[1].as<std::string>());
  return {a, b};
}

net::Topology parse_topology(const Reader& r, const YAML::Node& root) {
  const std::string where = "topology";
  const YAML::Node t = root["topology"];
  if (!t.IsDefined()) r.fail(root, where, "required field missing");
  r.keys(t, where, {"generator", "spines", "leaves", "servers_per_leaf", "k", "link", "nodes", "links"});
  net::FabricDefaults fabric;
  if (auto link = r.section(t, "link", where, false); link.IsDefined()) {
    r.keys(link, where + ".link", {"bandwidth_gbps", "delay_us"});
    fabric.bandwidth_bps = positive(r, link, "bandwidth_gbps", where + ".link", 10.0) * 1e9;
    fabric.delay = us_field(r, link, "delay_us", where + ".link", kMicrosecond);
  }
  const auto generator = r.get<std::string>(t, "generator", where, "");
  if (generator == "clos" || generator == "fat_tree") {
    if (t["nodes"].IsDefined() || t["links"].IsDefined())
      r.fail(t, where, "nodes/links cannot be combined with a generator");
    if (generator == "clos") {
      const int spines = r.need<int>(t, "spines", where);
      const int leaves = r.need<int>(t, "leaves", where);
      const int spl = r.need<int>(t, "servers_per_leaf", where);
      if (spines < 1 || leaves < 1 || spl < 1) r.fail(t, where, "clos dimensions must be positive");
      return net::build_clos(spines, leaves, spl, fabric);
    }
    const int k = r.need<int>(t, "k", where);
    if (k < 2 || k % 2 != 0) r.fail(t["k"], where + ".k", "must be an even integer >= 2");
    return net::build_fat_tree(k, fabric);
  }
  if (!generator.empty()) r.fail(t["generator"], where + ".generator", "unknown generator '" + generator + "'");

  std::vector<net::NodeSpec> nodes;
  const auto nseq = r.section(t, "nodes", where, true);
  if (!nseq.IsDefined()) r.fail(t, where + ".nodes", "required without a generator");
  for (std::size_t i = 0; i < nseq.size(); ++i) {
    const std::string w = where + ".nodes[" + std::to_string(i) + "]";
    r.keys(nseq[i], w, {"name", "kind"});
    net::NodeSpec spec;
    spec.name = r.need<std::string>(nseq[i], "name", w);
    const auto kind = r.get<std::string>(nseq[i], "kind", w, "switch");
    if (kind == "server") spec.kind = NodeKind::kServer;
    else if (kind != "switch") r.fail(nseq[i]["kind"], w + ".kind", "expected switch or server");
    nodes.push_back(spec);
  }
  std::vector<net::EdgeSpec> edges;
  const auto lseq = r.section(t, "links", where, true);
  for (std::size_t i = 0; lseq.IsDefined() && i < lseq.size(); ++i) {
    const std::string w = where + ".links[" + std::to_string(i) + "]";
    r.keys(lseq[i], w, {"a", "b", "bandwidth_gbps", "delay_us"});
    net::EdgeSpec e;
    e.a = r.need<std::string>(lseq[i], "a", w);
    e.b = r.need<std::string>(lseq[i], "b", w);
    e.bandwidth_bps = positive(r, lseq[i], "bandwidth_gbps", w, fabric.bandwidth_bps / 1e9) * 1e9;
    e.delay = us_field(r, lseq[i], "delay_us", w, fabric.delay);
    for (const auto& end : {e.a, e.b}) {
      if (std::none_of(nodes.begin(), nodes.end(), [&](const auto& n) { return n.name == end; }))
        r.fail(lseq[i], w, "unknown node '" + end + "'");
    }
    edges.push_back(e);
  }
  try {
    return net::build_arbitrary(nodes, edges, {});
  } catch (const ConfigError& e) {
    r.fail(t, where, e.what());
  }
}

void parse_routing(const Reader& r, const YAML::Node& root, net::Topology& topo) {
  const std::string where = "routing";
  const YAML::Node rt = r.section(root, "routing", "", false);
  if (!rt.IsDefined()) return;
  r.keys(rt, where, {"generator", "routes"});
  const auto generator = r.get<std::string>(rt, "generator", where, "");
  if (generator == "shortest_path") net::install_shortest_path_routes(topo);
  else if (!generator.empty()) r.fail(rt["generator"], where + ".generator", "unknown generator '" + generator + "'");
  const auto routes = r.section(rt, "routes", where, true);
  for (std::size_t i = 0; routes.IsDefined() && i < routes.size(); ++i) {
    const std::string w = where + ".routes[" + std::to_string(i) + "]";
    r.keys(routes[i], w, {"node", "destination", "destinations", "via"});
    const auto node = node_named(r, topo, routes[i], w + ".node", r.need<std::string>(routes[i], "node", w));
    const auto via = node_named(r, topo, routes[i], w + ".via", r.need<std::string>(routes[i], "via", w));
    const auto port = port_toward(r, topo, routes[i], w + ".via", node, via);
    std::vector<std::string> dests;
    if (auto d = r.opt<std::string>(routes[i], "destination", w)) dests.push_back(*d);
    if (auto ds = r.opt<std::vector<std::string>>(routes[i], "destinations", w)) dests.insert(dests.end(), ds->begin(), ds->end());
    if (dests.empty()) r.fail(routes[i], w, "destination or destinations required");
    for (const auto& d : dests) topo.set_route(node, node_named(r, topo, routes[i], w + ".destination", d), port);
  }
}

std::vector<sim::FailureSpec> parse_failures(const Reader& r, const YAML::Node& root, const net::Topology& topo) {
  const auto seq = r.section(root, "failures", "", true);
  std::vector<sim::FailureSpec> out;
  if (!seq.IsDefined()) return out;
  struct Pending {
    std::size_t index;
    sim::FailureSpec spec;
    bool auto_detour;
    std::vector<net::RouteOverride> explicit_overrides;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::string w = "failures[" + std::to_string(i) + "]";
    const auto& f = seq[i];
    r.keys(f, w, {"at_us", "link", "auto_detour", "overrides"});
    Pending p{i, {}, r.get<bool>(f, "auto_detour", w, true), {}};
    p.spec.at = us_field(r, f, "at_us", w, 0);
    if (!f["link"].IsDefined()) r.fail(f, w + ".link", "required field missing");
    const auto [a, b] = node_pair(r, topo, f["link"], w + ".link");
    const auto lid = topo.link_between(a, b);
    if (!lid) r.fail(f["link"], w + ".link", "no link between '" + topo.name(a) + "' and '" + topo.name(b) + "'");
    p.spec.link = *lid;
    const auto ov = r.section(f, "overrides", w, true);
    for (std::size_t j = 0; ov.IsDefined() && j < ov.size(); ++j) {
      const std::string wo = w + ".overrides[" + std::to_string(j) + "]";
      r.keys(ov[j], wo, {"node", "destination", "destinations", "via"});
      const auto node = node_named(r, topo, ov[j], wo + ".node", r.need<std::string>(ov[j], "node", wo));
      const auto via = node_named(r, topo, ov[j], wo + ".via", r.need<std::string>(ov[j], "via", wo));
      const auto port = port_toward(r, topo, ov[j], wo + ".via", node, via);
      std::vector<std::string> dests;
      if (auto d = r.opt<std::string>(ov[j], "destination", wo)) dests.push_back(*d);
      if (auto ds = r.opt<std::vector<std::string>>(ov[j], "destinations", wo)) dests.insert(dests.end(), ds->begin(), ds->end());
      if (dests.empty()) r.fail(ov[j], wo, "destination or destinations required");
      for (const auto& d : dests)
        p.explicit_overrides.push_back({node, node_named(r, topo, ov[j], wo + ".destination", d), port});
    }
    pending.push_back(std::move(p));
  }
  // Detours are planned in failure order against the topology as it will be
  // at that moment; explicit overrides win over planned ones.
  std::stable_sort(pending.begin(), pending.end(), [](const auto& x, const auto& y) { return x.spec.at < y.spec.at; });
  net::Topology future = topo;
  for (auto& p : pending) {
    if (!future.link_up(p.spec.link)) {
      r.fail(seq[p.index]["link"], "failures[" + std::to_string(p.index) + "].link", "link fails twice");
    }
    std::vector<net::RouteOverride> overrides;
    if (p.auto_detour) {
      const LinkId failed[] = {p.spec.link};
      for (const auto& o : net::plan_detours(future, failed)) {
        const bool shadowed = std::any_of(p.explicit_overrides.begin(), p.explicit_overrides.end(), [&](const auto& e) {
          return e.node == o.node && e.destination == o.destination;
        });
        if (!shadowed) overrides.push_back(o);
      }
    }
    overrides.insert(overrides.end(), p.explicit_overrides.begin(), p.explicit_overrides.end());
    p.spec.overrides = overrides;
    future.fail_link(p.spec.link, overrides);
    out.push_back(p.spec);
  }
  return out;
}

std::vector<sim::FlowSpec> parse_flows(const Reader& r, const YAML::Node& root, const net::Topology& topo) {
  const auto seq = r.section(root, "flows", "", true);
  std::vector<sim::FlowSpec> out;
  for (std::size_t i = 0; seq.IsDefined() && i < seq.size(); ++i) {
    const std::string w = "flows[" + std::to_string(i) + "]";
    const auto& f = seq[i];
    r.keys(f, w, {"name", "src", "dst", "rate_gbps", "start_us", "stop_us", "size_bytes", "malicious"});
    sim::FlowSpec spec;
    spec.id = FlowId{static_cast<std::uint32_t>(i)};
    spec.name = r.get<std::string>(f, "name", w, "f" + std::to_string(i));
    for (const auto& prev : out)
      if (prev.name == spec.name) r.fail(f["name"], w + ".name", "duplicate flow name '" + spec.name + "'");
    spec.src = node_named(r, topo, f, w + ".src", r.need<std::string>(f, "src", w));
    spec.dst = node_named(r, topo, f, w + ".dst", r.need<std::string>(f, "dst", w));
    if (!topo.is_server(spec.src)) r.fail(f["src"], w + ".src", "must be a server");
    if (!topo.is_server(spec.dst)) r.fail(f["dst"], w + ".dst", "must be a server");
    if (spec.src == spec.dst) r.fail(f, w, "src and dst are the same server");
    spec.rate_bps = positive(r, f, "rate_gbps", w, 1.0) * 1e9;
    spec.start = us_field(r, f, "start_us", w, 0);
    spec.stop = us_field(r, f, "stop_us", w, kNever);
    if (spec.stop <= spec.start) r.fail(f["stop_us"], w + ".stop_us", "must be after start_us");
    spec.size_bytes = r.get<std::uint64_t>(f, "size_bytes", w, 0);
    spec.malicious = r.get<bool>(f, "malicious", w, false);
    out.push_back(spec);
  }
  return out;
}

std::vector<sim::MisbehaviorSpec> parse_misbehaving(const Reader& r, const YAML::Node& root,
                                                    const net::Topology& topo) {
  const auto seq = r.section(root, "misbehaving_servers", "", true);
  std::vector<sim::MisbehaviorSpec> out;
  for (std::size_t i = 0; seq.IsDefined() && i < seq.size(); ++i) {
    const std::string w = "misbehaving_servers[" + std::to_string(i) + "]";
    const auto& m = seq[i];
    r.keys(m, w, {"server", "start_us", "period_us", "pause_us", "stop_us"});
    sim::MisbehaviorSpec spec;
    spec.server = node_named(r, topo, m, w + ".server", r.need<std::string>(m, "server", w));
    if (!topo.is_server(spec.server)) r.fail(m["server"], w + ".server", "must be a server");
    spec.start = us_field(r, m, "start_us", w, 0);
    spec.period = us_field(r, m, "period_us", w, 0);
    spec.pause_duration = us_field(r, m, "pause_us", w, 0);
    spec.stop = us_field(r, m, "stop_us", w, kNever);
    if (spec.period > 0 && spec.pause_duration >= spec.period)
      r.fail(m, w + ".pause_us", "must be shorter than period_us");
    out.push_back(spec);
  }
  return out;
}

void parse_pfc(const Reader& r, const YAML::Node& root, sim::PfcConfig& pfc) {
  const auto n = r.section(root, "pfc", "", false);
  if (!n.IsDefined()) return;
  r.keys(n, "pfc", {"packet_bytes", "xoff_bytes", "xon_bytes", "buffer_bytes", "nic_queue_bytes"});
  pfc.packet_bytes = r.get<std::uint32_t>(n, "packet_bytes", "pfc", pfc.packet_bytes);
  pfc.xoff_bytes = r.get<std::uint64_t>(n, "xoff_bytes", "pfc", pfc.xoff_bytes);
  pfc.xon_bytes = r.get<std::uint64_t>(n, "xon_bytes", "pfc", pfc.xon_bytes);
  pfc.buffer_bytes = r.get<std::uint64_t>(n, "buffer_bytes", "pfc", pfc.buffer_bytes);
  pfc.nic_queue_bytes = r.get<std::uint64_t>(n, "nic_queue_bytes", "pfc", pfc.nic_queue_bytes);
  if (pfc.packet_bytes == 0) r.fail(n["packet_bytes"], "pfc.packet_bytes", "must be positive");
  if (pfc.xon_bytes >= pfc.xoff_bytes) r.fail(n, "pfc.xon_bytes", "must be below pfc.xoff_bytes");
}

void parse_detector(const Reader& r, const YAML::Node& root, detect::DetectorConfig& d) {
  const auto n = r.section(root, "detector", "", false);
  if (!n.IsDefined()) return;
  r.keys(n, "detector", {"enabled", "capacity", "temporal_check_delay_us", "check_timeout_us", "max_rechecks",
                             "hold_bytes"});
  d.enabled = r.get<bool>(n, "enabled", "detector", d.enabled);
  d.capacity = r.get<std::size_t>(n, "capacity", "detector", d.capacity);
  if (d.capacity == 0) r.fail(n["capacity"], "detector.capacity", "must be positive");
  d.temporal_check_delay = us_field(r, n, "temporal_check_delay_us", "detector", d.temporal_check_delay);
  d.check_timeout = us_field(r, n, "check_timeout_us", "detector", d.check_timeout);
  d.max_rechecks = r.get<std::uint32_t>(n, "max_rechecks", "detector", d.max_rechecks);
  if (auto hold = r.opt<std::uint64_t>(n, "hold_bytes", "detector")) d.hold_bytes = *hold;
}

void parse_recovery(const Reader& r, const YAML::Node& root, recovery::RecoveryPolicy& p) {
  const auto n = r.section(root, "recovery", "", false);
  if (!n.IsDefined()) return;
  r.keys(n, "recovery", {"break", "trigger", "rate_limit_fraction", "reaction_delay_us"});
  const auto brk = r.get<std::string>(n, "break", "recovery", "none");
  if (brk == "drain_one_queue") p.break_action = recovery::BreakAction::kDrainOneQueue;
  else if (brk != "none") r.fail(n["break"], "recovery.break", "expected drain_one_queue or none");
  const auto trig = r.get<std::string>(n, "trigger", "recovery", "none");
  if (trig == "mute_server_pause") p.trigger_action = recovery::TriggerAction::kMuteServerPause;
  else if (trig == "rate_limit_heavy_hitter") p.trigger_action = recovery::TriggerAction::kRateLimitHeavyHitter;
  else if (trig != "none")
    r.fail(n["trigger"], "recovery.trigger", "expected mute_server_pause, rate_limit_heavy_hitter or none");
  p.rate_limit_fraction = r.get<double>(n, "rate_limit_fraction", "recovery", p.rate_limit_fraction);
  if (!(p.rate_limit_fraction > 0 && p.rate_limit_fraction <= 1))
    r.fail(n["rate_limit_fraction"], "recovery.rate_limit_fraction", "must be in (0, 1]");
  p.reaction_delay = us_field(r, n, "reaction_delay_us", "recovery", p.reaction_delay);
}

void parse_sim(const Reader& r, const YAML::Node& root, Scenario& s) {
  const auto n = r.section(root, "sim", "", false);
  if (!n.IsDefined()) return;
  r.keys(n, "sim", {"end_us", "seed", "start_jitter_us", "oracle_interval_us", "probe_window_us", "report_grace_us",
                    "throughput_bin_us"});
  s.end = us_field(r, n, "end_us", "sim", s.end);
  if (s.end <= 0) r.fail(n["end_us"], "sim.end_us", "must be positive");
  s.config.seed = r.get<std::uint64_t>(n, "seed", "sim", s.config.seed);
  s.config.start_jitter = us_field(r, n, "start_jitter_us", "sim", s.config.start_jitter);
  s.oracle_interval = us_field(r, n, "oracle_interval_us", "sim", s.oracle_interval);
  if (s.oracle_interval <= 0) r.fail(n["oracle_interval_us"], "sim.oracle_interval_us", "must be positive");
  if (n["probe_window_us"].IsDefined()) s.probe_window = us_field(r, n, "probe_window_us", "sim", 0);
  if (n["report_grace_us"].IsDefined()) s.report_grace = us_field(r, n, "report_grace_us", "sim", 0);
  s.config.throughput_bin = us_field(r, n, "throughput_bin_us", "sim", s.config.throughput_bin);
  if (s.config.throughput_bin <= 0) r.fail(n["throughput_bin_us"], "sim.throughput_bin_us", "must be positive");
}

std::vector<Intervention> parse_interventions(const Reader& r, const YAML::Node& root, const net::Topology& topo) {
  const auto seq = r.section(root, "interventions", "", true);
  std::vector<Intervention> out;
  for (std::size_t i = 0; seq.IsDefined() && i < seq.size(); ++i) {
    const std::string w = "interventions[" + std::to_string(i) + "]";
    const auto& n = seq[i];
    r.keys(n, w, {"at_us", "after", "delay_us", "drain"});
    Intervention iv;
    if (n["at_us"].IsDefined()) iv.at = us_field(r, n, "at_us", w, 0);
    if (auto after = r.opt<std::string>(n, "after", w)) {
      if (*after != "LOOP_DECLARED") r.fail(n["after"], w + ".after", "only LOOP_DECLARED is supported");
      iv.after_loop_declared = true;
    }
    if (iv.at.has_value() == iv.after_loop_declared) r.fail(n, w, "exactly one of at_us or after is required");
    iv.delay = us_field(r, n, "delay_us", w, 0);
    if (!n["drain"].IsDefined()) r.fail(n, w + ".drain", "required field missing");
    const auto [node, neighbor] = node_pair(r, topo, n["drain"], w + ".drain");
    iv.drain = PortRef{node, port_toward(r, topo, n["drain"], w + ".drain", node, neighbor)};
    out.push_back(iv);
  }
  return out;
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  const Reader r(origin);
  if (!root.IsMap()) r.fail(root, "<root>", "expected a mapping");
  r.keys(root, "", {"name", "description", "topology", "routing", "failures", "flows", "misbehaving_servers", "pfc",
                    "detector", "recovery", "sim", "interventions"});
  Scenario s;
  s.name = r.need<std::string>(root, "name", "");
  s.description = r.get<std::string>(root, "description", "", "");
  s.topology = parse_topology(r, root);
  parse_routing(r, root, s.topology);
  try {
    s.topology.validate();
  } catch (const ConfigError& e) {
    r.fail(root["routing"], "routing", e.what());
  }
  s.failures = parse_failures(r, root, s.topology);
  s.flows = parse_flows(r, root, s.topology);
  s.misbehaving = parse_misbehaving(r, root, s.topology);
  parse_pfc(r, root, s.config.pfc);
  parse_detector(r, root, s.config.detector);
  parse_recovery(r, root, s.recovery);
  parse_sim(r, root, s);
  s.interventions = parse_interventions(r, root, s.topology);
  for (const auto& f : s.flows) {
    if (!s.topology.walk(f.src, f.dst))
      r.fail(root["flows"], "flows", "flow '" + f.name + "' has no route before any failure");
  }
  return s;
}

Scenario load_scenario(const std::string& path_or_name) {
  std::ifstream in(path_or_name);
  if (in) {
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path_or_name);
  }
  if (auto text = builtin_text(path_or_name)) return parse_scenario(*text, "builtin:" + path_or_name);
  throw ConfigError("no scenario file or built-in named '" + path_or_name + "'");
}

Scenario builtin(std::string_view name) {
  auto text = builtin_text(name);
  if (!text) throw ConfigError("unknown built-in scenario '" + std::string(name) + "'");
  return parse_scenario(*text, "builtin:" + std::string(name));
}

}  // namespace dcfit::scenario
