#include "dcfit/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace dcfit::runner {

namespace {

using Clock = std::chrono::steady_clock;

struct Pending {
  SimTime time = 0;
  std::uint64_t order = 0;
  // Exactly one of these is meaningful.
  std::optional<std::size_t> report;
  std::optional<std::size_t> intervention;
};

bool share_port(const std::vector<PortRef>& a, const std::vector<PortRef>& b) {
  return std::any_of(a.begin(), a.end(), [&](const auto& p) { return std::find(b.begin(), b.end(), p) != b.end(); });
}

}  // namespace

std::string RunReport::port_label(PortRef ref) const {
  const auto& n = ref.node.value < node_names.size() ? node_names[ref.node.value] : std::to_string(ref.node.value);
  return n + ":" + std::to_string(ref.port.value);
}

std::optional<double> RunReport::mean_throughput(SimTime from, bool include_malicious) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : throughput) {
    if (f.malicious && !include_malicious) continue;
    for (std::size_t b = 0; b < f.normalized.size(); ++b) {
      const SimTime lo = static_cast<SimTime>(b) * throughput_bin;
      const SimTime hi = lo + throughput_bin;
      if (lo < from || lo < f.start || hi > f.stop || hi > end) continue;
      sum += f.normalized[b];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

RunReport run(const scenario::Scenario& sc, const RunOptions& options) {
  const auto wall_start = Clock::now();
  sim::SimConfig config = sc.config;
  if (options.seed) config.seed = *options.seed;
  config.record_trace = options.record_trace;

  sim::Simulator s(sc.topology, sc.flows, sc.failures, sc.misbehaving, config);
  const bool has_after = std::any_of(sc.interventions.begin(), sc.interventions.end(),
                                     [](const auto& iv) { return iv.after_loop_declared; });
  s.set_stop_on_loop_declared(has_after);

  RunReport out;
  out.scenario = sc.name;
  out.seed = config.seed;
  out.end = sc.end;
  out.throughput_bin = config.throughput_bin;
  for (std::uint32_t n = 0; n < sc.topology.node_count(); ++n) out.node_names.push_back(sc.topology.name(NodeId{n}));

  out.probe_window = sc.probe_window.value_or(oracle::default_probe_window(sc.topology, config.pfc));
  const SimTime grace = sc.report_grace.value_or(2 * config.detector.temporal_check_delay +
                                                 config.detector.check_timeout + 100 * kMicrosecond);
  oracle::Oracle oracle(out.probe_window);

  std::vector<Pending> pending;
  std::uint64_t order = 0;
  for (std::size_t i = 0; i < sc.interventions.size(); ++i) {
    if (sc.interventions[i].at) pending.push_back({*sc.interventions[i].at, order++, std::nullopt, i});
  }
  bool loop_seen = false;
  SimTime next_sample = sc.oracle_interval;

  auto apply_due = [&] {
    std::stable_sort(pending.begin(), pending.end(),
                     [](const auto& a, const auto& b) { return a.time != b.time ? a.time < b.time : a.order < b.order; });
    while (!pending.empty() && pending.front().time <= s.now()) {
      const Pending p = pending.front();
      pending.erase(pending.begin());
      if (p.intervention) {
        const auto& iv = sc.interventions[*p.intervention];
        const auto packets = s.drain_queue(iv.drain, std::nullopt, "intervention");
        Json attrs = Json::object();
        attrs["packets"] = packets;
        s.add_record(TraceRecord{s.now(), "INTERVENTION", iv.drain.node, iv.drain.port.value, attrs});
        out.interventions.push_back({s.now(), {iv.drain}, true});
      } else {
        const auto& rep = out.reports[*p.report];
        RecoveryAction act;
        act.time = s.now();
        act.report = *p.report;
        std::vector<PortRef> touched = rep.loop_ports;
        try {
          if (sc.recovery.break_action == recovery::BreakAction::kDrainOneQueue) {
            const auto br = recovery::break_deadlock(s, rep);
            act.drained = br.drained;
            act.packets = br.packets;
            act.loss_fraction = br.loss_fraction;
          }
          act.trigger_action = recovery::mitigate_trigger(s, rep, sc.recovery);
        } catch (const recovery::PolicyError& e) {
          act.error = e.what();
          Json attrs = Json::object();
          attrs["error"] = e.what();
          s.add_record(TraceRecord{s.now(), "RECOVERY_ERROR", rep.initiator.node, rep.initiator.port.value, attrs});
        }
        out.recoveries.push_back(act);
        out.interventions.push_back({s.now(), touched, false});
        if (!out.first_recovery) out.first_recovery = s.now();
      }
      oracle.invalidate();
    }
  };

  while (true) {
    SimTime target = std::min(sc.end, next_sample);
    for (const auto& p : pending) target = std::min(target, p.time);
    const bool stopped = s.run_until(target);

    for (const auto& decl : s.take_loop_declarations()) {
      if (loop_seen) continue;
      loop_seen = true;
      for (std::size_t i = 0; i < sc.interventions.size(); ++i) {
        if (sc.interventions[i].after_loop_declared)
          pending.push_back({decl.time + sc.interventions[i].delay, order++, std::nullopt, i});
      }
      s.set_stop_on_loop_declared(false);
    }
    for (auto& rep : s.take_reports()) {
      const std::size_t idx = out.reports.size();
      out.reports.push_back(rep);
      out.oracle_log.push_back(oracle.check_report(s, out.reports.back(), idx));
      if (!sc.recovery.any()) continue;
      const bool covered = std::any_of(pending.begin(), pending.end(), [&](const auto& p) {
        return p.report && share_port(out.reports[*p.report].loop_ports, rep.loop_ports);
      });
      if (!covered) pending.push_back({s.now() + sc.recovery.reaction_delay, order++, idx, std::nullopt});
    }
    if (stopped) continue;

    apply_due();
    if (s.now() >= next_sample) {
      if (options.check_invariants) {
        s.check_conservation();
        s.check_traffic_mapping();
      }
      out.oracle_log.push_back(oracle.sample(s));
      next_sample += sc.oracle_interval;
    }
    if (s.now() >= sc.end) break;
  }

  out.adjudication = oracle::adjudicate(out.reports, out.oracle_log, out.interventions, sc.end, grace);
  out.messages = s.messages();
  for (const auto& r : s.trace().records()) ++out.records_by_kind[r.kind];
  for (const char* reason : {"link_down", "no_route", "misdelivered", "recovery_drain", "intervention"}) {
    if (auto n = s.total_drops(reason)) out.drops_by_reason[reason] = n;
  }
  for (auto sw : sc.topology.switches()) {
    const auto ports = static_cast<std::uint32_t>(sc.topology.port_count(sw));
    out.state_bytes.emplace_back(sc.topology.name(sw),
                                 detect::detector_state_size(ports, 14, 6, 16,
                                                             static_cast<std::uint32_t>(config.detector.capacity)));
  }
  const auto bins = static_cast<std::size_t>((sc.end + config.throughput_bin - 1) / config.throughput_bin);
  for (const auto& f : s.flows()) {
    FlowThroughput ft;
    ft.name = f.spec.name;
    ft.malicious = f.spec.malicious;
    ft.rate_bps = f.spec.rate_bps;
    ft.start = f.effective_start;
    ft.stop = f.spec.stop;
    const double bin_s = static_cast<double>(config.throughput_bin) * 1e-9;
    for (std::size_t b = 0; b < bins; ++b) {
      const double bytes = b < f.delivered_bins.size() ? static_cast<double>(f.delivered_bins[b]) : 0.0;
      ft.normalized.push_back(std::clamp(bytes * 8.0 / bin_s / f.spec.rate_bps, 0.0, 1.0));
    }
    out.throughput.push_back(std::move(ft));
  }
  if (out.first_recovery) {
    out.recurrences = static_cast<std::size_t>(std::count_if(
        out.reports.begin(), out.reports.end(), [&](const auto& r) { return r.t_confirmed > *out.first_recovery; }));
  }
  out.trace_hash = s.trace().hash();
  out.trace_records = s.trace().size();
  if (options.record_trace) out.trace = std::make_shared<Trace>(s.trace());
  out.events = s.events_processed();
  out.oracle_probes = oracle.probes_run();
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return out;
}

namespace {

Json port_obj(const RunReport& r, PortRef p) { return r.port_label(p); }

Json ports_arr(const RunReport& r, const std::vector<PortRef>& ports) {
  Json a = Json::array();
  for (const auto& p : ports) a.push_back(port_obj(r, p));
  return a;
}

}  // namespace

Json to_json(const RunReport& r) {
  Json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["end_us"] = to_us(r.end);
  j["clean"] = r.clean();
  j["true_positives"] = r.adjudication.true_positives;
  j["false_positives"] = r.adjudication.false_positives;
  j["false_negatives"] = r.adjudication.false_negatives;
  Json reports = Json::array();
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& rep = r.reports[i];
    Json x;
    x["initiator"] = port_obj(r, rep.initiator);
    x["seq"] = rep.seq_id;
    x["loop_ports"] = ports_arr(r, rep.loop_ports);
    x["loop_ingress"] = ports_arr(r, rep.loop_ingress);
    x["t_loop_detected_us"] = to_us(rep.t_loop_detected);
    x["t_confirmed_us"] = to_us(rep.t_confirmed);
    x["trigger"] = port_obj(r, rep.trigger);
    x["trigger_location"] = detect::to_string(rep.trigger_location);
    x["hop_count"] = rep.hop_count;
    x["closure_hops"] = rep.closure_hops;
    x["check_hops"] = rep.check_hops;
    x["exposing_hops"] = rep.exposing_hops;
    x["true_positive"] = static_cast<bool>(r.adjudication.report_true[i]);
    if (r.adjudication.latencies[i] >= 0) x["latency_us"] = to_us(r.adjudication.latencies[i]);
    reports.push_back(std::move(x));
  }
  j["reports"] = std::move(reports);
  Json incidents = Json::array();
  for (const auto& inc : r.adjudication.incidents) {
    Json x;
    x["ports"] = ports_arr(r, inc.ports);
    x["formed_us"] = to_us(inc.formed);
    x["first_seen_us"] = to_us(inc.first_seen);
    if (inc.closed) x["closed_us"] = to_us(*inc.closed);
    x["close_reason"] = inc.close_reason;
    x["reports"] = inc.reports;
    x["pending"] = inc.pending;
    x["preempted"] = inc.preempted;
    x["false_negative"] = inc.false_negative;
    incidents.push_back(std::move(x));
  }
  j["incidents"] = std::move(incidents);
  Json recov = Json::array();
  for (const auto& a : r.recoveries) {
    Json x;
    x["t_us"] = to_us(a.time);
    x["report"] = a.report;
    if (a.drained) x["drained"] = port_obj(r, *a.drained);
    x["packets"] = a.packets;
    x["loss_fraction"] = a.loss_fraction;
    x["trigger_action"] = a.trigger_action;
    if (!a.error.empty()) x["error"] = a.error;
    recov.push_back(std::move(x));
  }
  j["recoveries"] = std::move(recov);
  j["recurrences"] = r.recurrences;
  if (r.first_recovery) {
    j["first_recovery_us"] = to_us(*r.first_recovery);
    if (auto m = r.mean_throughput(*r.first_recovery + r.throughput_bin)) j["post_recovery_throughput"] = *m;
  }
  if (auto m = r.mean_throughput(0)) j["mean_throughput"] = *m;
  j["messages"] = {{"pause", r.messages.pause_frames},
                   {"resume", r.messages.resume_frames},
                   {"checking_piggybacked", r.messages.checking_piggybacked},
                   {"checking_packets", r.messages.checking_packets},
                   {"check_packets", r.messages.check_packets},
                   {"detector_total", r.messages.detector_messages()}};
  j["records_by_kind"] = r.records_by_kind;
  j["drops"] = r.drops_by_reason;
  Json state = Json::object();
  for (const auto& [name, bytes] : r.state_bytes) state[name] = bytes;
  j["state_bytes"] = std::move(state);
  j["trace_hash"] = hex64(r.trace_hash);
  j["trace_records"] = r.trace_records;
  j["events"] = r.events;
  j["oracle_probes"] = r.oracle_probes;
  j["probe_window_us"] = to_us(r.probe_window);
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

std::string throughput_csv(const RunReport& r) {
  std::ostringstream out;
  out << "flow,malicious,bin_start_us,normalized\n";
  for (const auto& f : r.throughput) {
    for (std::size_t b = 0; b < f.normalized.size(); ++b) {
      out << f.name << ',' << (f.malicious ? 1 : 0) << ',' << to_us(static_cast<SimTime>(b) * r.throughput_bin) << ','
          << f.normalized[b] << '\n';
    }
  }
  return out.str();
}

std::string reports_csv(const RunReport& r) {
  std::ostringstream out;
  out << "index,initiator,t_confirmed_us,trigger,trigger_location,hop_count,loop_length,true_positive,latency_us\n";
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    const auto& rep = r.reports[i];
    out << i << ',' << r.port_label(rep.initiator) << ',' << to_us(rep.t_confirmed) << ','
        << r.port_label(rep.trigger) << ',' << detect::to_string(rep.trigger_location) << ',' << rep.hop_count << ','
        << rep.loop_ports.size() << ',' << (r.adjudication.report_true[i] ? 1 : 0) << ','
        << (r.adjudication.latencies[i] >= 0 ? to_us(r.adjudication.latencies[i]) : -1.0) << '\n';
  }
  return out.str();
}

void write_run_dir(const RunReport& r, const std::filesystem::path& dir, bool write_trace) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << to_json(r).dump(2) << '\n';
  std::ofstream(dir / "throughput.csv") << throughput_csv(r);
  std::ofstream oracle_out(dir / "oracle.jsonl");
  for (const auto& s : r.oracle_log) {
    Json x;
    x["t_us"] = to_us(s.time);
    x["context"] = s.context;
    if (s.report_index) x["report"] = *s.report_index;
    Json cycles = Json::array();
    for (std::size_t c = 0; c < s.cycles.size(); ++c) {
      cycles.push_back({{"ports", ports_arr(r, s.cycles[c])},
                        {"confirmed", static_cast<bool>(s.confirmed[c])},
                        {"formed_us", to_us(s.formed[c])}});
    }
    x["cycles"] = std::move(cycles);
    oracle_out << x.dump() << '\n';
  }
  if (write_trace && r.trace) {
    std::ofstream trace_out(dir / "trace.jsonl");
    r.trace->write_jsonl(trace_out);
  }
}

std::string generate_fuzz_yaml(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
  auto pick = [&](const auto& v) -> const auto& { return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))]; };
  constexpr int kMaxPorts = 6;

  const int n = uniform(4, 12);
  std::vector<int> degree(n, 0);
  std::set<std::pair<int, int>> edges;
  std::vector<std::vector<int>> adj(n);
  auto add_edge = [&](int a, int b) {
    if (a == b || degree[a] >= kMaxPorts || degree[b] >= kMaxPorts) return false;
    if (!edges.insert({std::min(a, b), std::max(a, b)}).second) return false;
    ++degree[a];
    ++degree[b];
    adj[a].push_back(b);
    adj[b].push_back(a);
    return true;
  };
  // Random spanning tree, leaving room for servers.
  for (int i = 1; i < n; ++i) {
    for (int tries = 0; tries < 64; ++tries) {
      const int p = uniform(0, i - 1);
      if (degree[p] < kMaxPorts - 2 && add_edge(i, p)) break;
    }
  }
  std::vector<std::pair<int, int>> extras;
  const int extra = uniform(1, n);
  for (int e = 0; e < extra; ++e) {
    const int a = uniform(0, n - 1);
    const int b = uniform(0, n - 1);
    if (degree[a] < kMaxPorts - 1 && degree[b] < kMaxPorts - 1 && add_edge(a, b)) extras.emplace_back(a, b);
  }

  // A switch cycle closed by one extra edge: shortest b -> a path avoiding that edge.
  std::vector<int> ring;
  if (!extras.empty() && chance(0.7)) {
    const auto [a, b] = pick(extras);
    std::vector<int> prev(n, -1);
    std::vector<int> frontier{b};
    prev[b] = b;
    for (std::size_t i = 0; i < frontier.size() && prev[a] < 0; ++i) {
      const int v = frontier[i];
      for (int w : adj[v]) {
        if (prev[w] >= 0 || (v == b && w == a)) continue;
        prev[w] = v;
        frontier.push_back(w);
      }
    }
    if (prev[a] >= 0) {
      for (int v = a; v != b; v = prev[v]) ring.push_back(v);
      ring.push_back(b);
      if (chance(0.5)) std::reverse(ring.begin(), ring.end());
    }
  }
  const bool on_ring_routes = ring.size() >= 3 && chance(0.8);

  std::vector<std::pair<std::string, int>> servers;
  auto add_server = [&](int sw, const std::string& suffix) {
    if (degree[sw] >= kMaxPorts) return;
    servers.emplace_back("H" + std::to_string(sw) + "_" + suffix, sw);
    ++degree[sw];
  };
  for (int v : ring) add_server(v, "r");
  for (int i = 0; i < n; ++i) {
    if (!chance(0.5)) continue;
    const int count = uniform(1, 2);
    for (int s = 0; s < count; ++s) add_server(i, std::to_string(s));
  }
  for (int i = 0; servers.size() < 2 && i < n; ++i) add_server(i, "x");

  std::ostringstream y;
  y << "name: fuzz_" << seed << "\n";
  y << "description: generated\n";
  y << "topology:\n  nodes:\n";
  for (int i = 0; i < n; ++i) y << "    - {name: S" << i << "}\n";
  for (const auto& [name, sw] : servers) y << "    - {name: " << name << ", kind: server}\n";
  y << "  links:\n";
  for (const auto& [a, b] : edges) y << "    - {a: S" << a << ", b: S" << b << "}\n";
  for (const auto& [name, sw] : servers) y << "    - {a: " << name << ", b: S" << sw << "}\n";
  y << "routing:\n  generator: shortest_path\n";

  // Ring switches forward toward ring-attached servers in one direction only.
  std::vector<std::pair<std::string, std::size_t>> ring_servers;
  for (const auto& [name, sw] : servers) {
    const auto it = std::find(ring.begin(), ring.end(), sw);
    if (it != ring.end()) ring_servers.emplace_back(name, static_cast<std::size_t>(it - ring.begin()));
  }
  if (on_ring_routes && !ring_servers.empty()) {
    y << "  routes:\n";
    for (const auto& [name, j] : ring_servers) {
      for (std::size_t i = 0; i < ring.size(); ++i) {
        if (i == j) continue;
        y << "    - {node: S" << ring[i] << ", destination: " << name << ", via: S" << ring[(i + 1) % ring.size()]
          << "}\n";
      }
    }
  }

  // Failures only hit switch-to-switch links off the ring whose loss keeps the graph connected.
  auto on_ring = [&](const std::pair<int, int>& e) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const int a = ring[i];
      const int b = ring[(i + 1) % ring.size()];
      if (e == std::pair{std::min(a, b), std::max(a, b)}) return true;
    }
    return false;
  };
  std::vector<std::pair<int, int>> candidates;
  for (const auto& e : edges)
    if (!on_ring_routes || !on_ring(e)) candidates.push_back(e);
  std::vector<std::pair<int, int>> failed;
  const int failures = uniform(0, 2);
  auto connected_without = [&](const std::vector<std::pair<int, int>>& removed) {
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : adj[v]) {
        const std::pair<int, int> e{std::min(v, w), std::max(v, w)};
        if (seen[w] || std::find(removed.begin(), removed.end(), e) != removed.end()) continue;
        seen[w] = true;
        stack.push_back(w);
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  };
  for (int f = 0; f < failures && !candidates.empty(); ++f) {
    const auto e = pick(candidates);
    auto trial = failed;
    trial.push_back(e);
    if (connected_without(trial)) failed = trial;
    candidates.erase(std::find(candidates.begin(), candidates.end(), e));
  }
  if (!failed.empty()) {
    y << "failures:\n";
    for (const auto& [a, b] : failed)
      y << "  - {at_us: " << uniform(200, 1500) << ", link: [S" << a << ", S" << b << "], auto_detour: true}\n";
  }

  y << "flows:\n";
  int flow_id = 0;
  auto emit_flow = [&](const std::string& src, const std::string& dst, int rate) {
    const int start = uniform(0, 500);
    y << "  - {name: f" << flow_id++ << ", src: " << src << ", dst: " << dst << ", rate_gbps: " << rate
      << ", start_us: " << start;
    if (chance(0.3)) y << ", stop_us: " << start + uniform(300, 2000);
    y << "}\n";
  };
  const int flows = uniform(2, 8);
  for (int f = 0; f < flows; ++f) {
    const auto& src = pick(servers);
    auto dst = src;
    while (dst.first == src.first) dst = pick(servers);
    emit_flow(src.first, dst.first, uniform(2, 8));
  }
  if (on_ring_routes && ring_servers.size() >= 2) {
    // Flows that travel at least two ring hops build the cyclic buffer dependency.
    for (const auto& src : ring_servers) {
      if (!chance(0.8)) continue;
      const auto& dst = pick(ring_servers);
      if (src.second == dst.second || (src.second + 1) % ring.size() == dst.second) continue;
      emit_flow(src.first, dst.first, uniform(4, 9));
    }
  }

  const bool misbehaving = chance(0.25);
  if (misbehaving) {
    const auto& victim = pick(servers);
    const int period = uniform(500, 1500);
    y << "misbehaving_servers:\n  - {server: " << victim.first << ", start_us: " << uniform(100, 500)
      << ", period_us: " << period << ", pause_us: " << period * uniform(40, 90) / 100 << "}\n";
  }
  const bool drain = chance(0.5);
  y << "recovery:\n  break: " << (drain ? "drain_one_queue" : "none") << "\n";
  if (drain && misbehaving && chance(0.5)) y << "  trigger: mute_server_pause\n";
  y << "sim:\n  end_us: 3000\n  seed: " << seed << "\n";
  return y.str();
}

FuzzSummary fuzz_campaign(std::size_t count, std::uint64_t seed, unsigned threads) {
  const auto wall_start = Clock::now();
  std::mt19937_64 seeder(seed);
  std::vector<std::uint64_t> seeds(count);
  for (auto& s : seeds) s = seeder() % 1'000'000'000ULL;
  FuzzSummary summary;
  summary.cases.resize(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      FuzzCase& c = summary.cases[i];
      c.seed = seeds[i];
      try {
        const auto sc = scenario::parse_scenario(generate_fuzz_yaml(c.seed), "fuzz:" + std::to_string(c.seed));
        c.name = sc.name;
        c.switches = sc.topology.switches().size();
        RunOptions opts;
        opts.record_trace = false;
        const auto r = run(sc, opts);
        c.reports = r.reports.size();
        c.incidents = r.adjudication.incidents.size();
        c.false_positives = r.adjudication.false_positives;
        c.false_negatives = r.adjudication.false_negatives;
        c.wall_seconds = r.wall_seconds;
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(threads, count); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  std::sort(summary.cases.begin(), summary.cases.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  for (const auto& c : summary.cases) {
    summary.false_positives += c.false_positives;
    summary.false_negatives += c.false_negatives;
    if (!c.error.empty()) ++summary.errors;
  }
  summary.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return summary;
}

}  // namespace dcfit::runner
