#include "dcfit/pfc_sim.hpp"

#include <cmath>
#include <sstream>

namespace dcfit::sim {

namespace {

std::string port_name(const net::Topology& topo, PortRef ref) {
  return topo.name(ref.node) + ":" + std::to_string(ref.port.value);
}

}  // namespace

Simulator::Simulator(net::Topology topology, std::vector<FlowSpec> flows, std::vector<FailureSpec> failures,
                     std::vector<MisbehaviorSpec> misbehaving, SimConfig config)
    : topology_(std::move(topology)),
      config_(config),
      failures_(std::move(failures)),
      misbehaving_(std::move(misbehaving)),
      trace_(std::make_shared<Trace>()) {
  topology_.validate();
  const auto& pfc = config_.pfc;
  if (pfc.packet_bytes == 0) throw ConfigError("pfc.packet_bytes must be positive");
  if (pfc.xon_bytes >= pfc.xoff_bytes) throw ConfigError("pfc.xon_bytes must be below pfc.xoff_bytes");
  if (pfc.nic_queue_bytes < pfc.packet_bytes) throw ConfigError("pfc.nic_queue_bytes must hold one packet");
  if (config_.throughput_bin <= 0) throw ConfigError("throughput bin must be positive");
  validate_buffers();
  if (!config_.detector.hold_bytes) config_.detector.hold_bytes = pfc.xon_bytes;

  nodes_.resize(topology_.node_count());
  for (std::uint32_t n = 0; n < topology_.node_count(); ++n) {
    NodeId id{n};
    auto ports = topology_.port_count(id);
    nodes_[n].egress.resize(ports);
    nodes_[n].ingress.resize(ports);
    nodes_[n].detector = detect::Detector(id, topology_.kind(id), ports, config_.detector);
  }
  link_epoch_.assign(topology_.links().size(), 0);

  std::mt19937_64 rng(config_.seed);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    auto& spec = flows[i];
    if (spec.id.value != i) throw ConfigError("flow ids must be dense and in order");
    if (!topology_.is_server(spec.src) || !topology_.is_server(spec.dst))
      throw ConfigError("flow '" + spec.name + "' must run between servers");
    if (spec.src == spec.dst) throw ConfigError("flow '" + spec.name + "' has identical endpoints");
    if (spec.rate_bps < 0) throw ConfigError("flow '" + spec.name + "' has a negative rate");
    const std::uint64_t draw = rng();
    FlowState state;
    state.spec = spec;
    state.current_rate_bps = spec.rate_bps;
    state.effective_start = spec.start + (config_.start_jitter > 0
                                              ? static_cast<SimTime>(draw % static_cast<std::uint64_t>(config_.start_jitter))
                                              : 0);
    state.next_tick_ps = state.effective_start * 1000;
    flows_.push_back(std::move(state));
    if (spec.rate_bps > 0 && flows_.back().effective_start < spec.stop)
      schedule(flows_.back().effective_start, ev::FlowTick{static_cast<std::uint32_t>(i)});
  }
  for (std::size_t i = 0; i < failures_.size(); ++i) {
    if (failures_[i].link.value >= topology_.links().size()) throw ConfigError("failure references unknown link");
    schedule(failures_[i].at, ev::Failure{i});
  }
  for (std::size_t i = 0; i < misbehaving_.size(); ++i) {
    if (!topology_.is_server(misbehaving_[i].server)) throw ConfigError("misbehaving node must be a server");
    schedule(misbehaving_[i].start, ev::Misbehave{i, true});
  }
}

void Simulator::validate_buffers() const {
  const auto& pfc = config_.pfc;
  for (auto sw : topology_.switches()) {
    std::uint64_t need = 0;
    for (std::uint16_t p = 0; p < topology_.port_count(sw); ++p) {
      const auto& link = topology_.link(*topology_.link_at(PortRef{sw, PortId{p}}));
      // Bytes that can still land after XOFF: one round trip on the wire plus
      // a packet finishing at each end.
      const auto rtt_bytes = static_cast<std::uint64_t>(
          std::ceil(link.bandwidth_bps * 2.0 * static_cast<double>(link.delay) / 8e9));
      need += pfc.xoff_bytes + rtt_bytes + 2ULL * pfc.packet_bytes;
    }
    if (need > pfc.buffer_bytes) {
      throw ConfigError("switch '" + topology_.name(sw) + "' needs " + std::to_string(need) +
                        " bytes of buffer for lossless operation but pfc.buffer_bytes is " +
                        std::to_string(pfc.buffer_bytes));
    }
  }
}

void Simulator::schedule(SimTime at, EventPayload payload) {
  if (at < now_) throw SimulationError("event scheduled in the past");
  events_.push(Event{at, next_sequence_++, std::move(payload)});
}

bool Simulator::run_until(SimTime until) {
  stop_requested_ = false;
  while (!events_.empty() && events_.top().time <= until) {
    Event e = std::move(const_cast<Event&>(events_.top()));
    events_.pop();
    if (e.time < now_) throw SimulationError("event queue went backwards");
    now_ = e.time;
    ++events_processed_;
    std::visit([this](const auto& payload) { handle(payload); }, e.payload);
    if (stop_requested_) {
      stop_requested_ = false;
      return true;
    }
  }
  if (until > now_) now_ = until;
  return false;
}

std::vector<detect::DeadlockReport> Simulator::take_reports() { return std::exchange(reports_, {}); }

std::vector<TraceRecord> Simulator::take_loop_declarations() { return std::exchange(loop_declarations_, {}); }

Simulator Simulator::probe_clone() const {
  Simulator copy = *this;
  copy.trace_ = std::make_shared<Trace>();
  copy.config_.record_trace = false;
  copy.stop_on_loop_ = false;
  copy.stop_on_report_ = false;
  copy.reports_.clear();
  copy.loop_declarations_.clear();
  for (auto& n : copy.nodes_) n.detector.set_enabled(false);
  return copy;
}

void Simulator::freeze_flow(FlowId flow) { flows_.at(flow.value).frozen = true; }

SimTime Simulator::serialization(const net::Link& link, std::uint32_t bytes) const {
  return static_cast<SimTime>(std::ceil(static_cast<double>(bytes) * 8.0 * 1e9 / link.bandwidth_bps));
}

void Simulator::trace(SimTime t, const char* kind, NodeId node, std::int32_t port, Json attrs) {
  if (!config_.record_trace) return;
  trace_->add(TraceRecord{t, kind, node, port, std::move(attrs)});
}

void Simulator::add_record(TraceRecord record) {
  if (config_.record_trace) trace_->add(std::move(record));
}

void Simulator::drop(const Packet& packet, NodeId at, const char* reason) {
  ++flows_[packet.flow.value].dropped;
  ++drops_[reason];
  trace(now_, "DROP", at, -1, Json{{"flow", packet.flow.value}, {"reason", reason}});
}

std::uint64_t Simulator::total_drops(const std::string& reason) const {
  auto it = drops_.find(reason);
  return it == drops_.end() ? 0 : it->second;
}

void Simulator::handle(const ev::FlowTick& e) {
  auto& f = flows_[e.flow];
  if (f.frozen || now_ >= f.spec.stop || f.current_rate_bps <= 0) return;
  const auto size = config_.pfc.packet_bytes;
  if (f.spec.size_bytes > 0 && f.bytes_injected >= f.spec.size_bytes) return;
  ++f.attempted;
  const PortRef nic{f.spec.src, PortId{0}};
  auto& q = nodes_[nic.node.value].egress[0];
  if ((q.paused && q.honor_pause) || q.bytes_queued + size > config_.pfc.nic_queue_bytes) {
    ++f.stalled;
  } else {
    Packet p{next_packet_id_++, f.spec.id, f.spec.src, f.spec.dst, size, PortId{0}};
    ++f.injected;
    f.bytes_injected += size;
    q.fifo.push_back(p);
    q.bytes_queued += size;
    try_transmit(nic);
  }
  const double interval_ps = static_cast<double>(size) * 8.0 / f.current_rate_bps * 1e12;
  f.next_tick_ps += std::max<std::int64_t>(1, std::llround(interval_ps));
  const SimTime next = (f.next_tick_ps + 999) / 1000;
  if (next < f.spec.stop) schedule(std::max(next, now_), ev::FlowTick{e.flow});
}

void Simulator::try_transmit(PortRef egress) {
  auto& q = nodes_[egress.node.value].egress[egress.port.value];
  if (q.in_service || q.fifo.empty()) return;
  if (q.paused && q.honor_pause) return;
  auto lid = topology_.link_at(egress);
  if (!lid || !topology_.link(*lid).up) return;
  q.in_service = std::move(q.fifo.front());
  q.fifo.pop_front();
  ++q.departures;
  schedule(now_ + serialization(topology_.link(*lid), q.in_service->size), ev::TxDone{egress, q.tx_epoch});
}

void Simulator::handle(const ev::TxDone& e) {
  auto& q = nodes_[e.port.node.value].egress[e.port.port.value];
  if (e.tx_epoch != q.tx_epoch || !q.in_service) return;
  Packet p = *q.in_service;
  q.in_service.reset();
  q.bytes_queued -= p.size;
  const auto lid = *topology_.link_at(e.port);
  const auto& link = topology_.link(lid);
  ++flows_[p.flow.value].in_flight;
  schedule(now_ + link.delay, ev::DataArrival{topology_.peer(e.port), link_epoch_[lid.value], p});
  release(e.port.node, p, e.port.port);
  try_transmit(e.port);
}

void Simulator::release(NodeId node, const Packet& packet, PortId egress) {
  if (topology_.is_server(node)) return;
  auto& ns = nodes_[node.value];
  auto& acct = ns.ingress[packet.ingress.value];
  if (acct.buffered_bytes < packet.size || ns.buffered_bytes < packet.size)
    throw SimulationError("ingress accounting underflow at " + topology_.name(node));
  acct.buffered_bytes -= packet.size;
  ns.buffered_bytes -= packet.size;
  ns.detector.on_dequeue(packet.ingress, egress, packet.size);
  if (acct.pausing_upstream && acct.buffered_bytes <= config_.pfc.xon_bytes) send_resume(node, packet.ingress);
}

void Simulator::handle(const ev::DataArrival& e) {
  Packet p = e.packet;
  auto& f = flows_[p.flow.value];
  --f.in_flight;
  const NodeId n = e.port.node;
  const auto lid = *topology_.link_at(e.port);
  if (e.link_epoch != link_epoch_[lid.value]) {
    drop(p, n, "link_down");
    return;
  }
  if (topology_.is_server(n)) {
    if (p.dst != n) {
      drop(p, n, "misdelivered");
      return;
    }
    ++f.delivered;
    f.bytes_delivered += p.size;
    const auto bin = static_cast<std::size_t>(now_ / config_.throughput_bin);
    if (f.delivered_bins.size() <= bin) f.delivered_bins.resize(bin + 1, 0);
    f.delivered_bins[bin] += p.size;
    return;
  }
  p.ingress = e.port.port;
  auto hop = net::next_hop(topology_, n, p.dst);
  if (!hop) {
    drop(p, n, "no_route");
    return;
  }
  enqueue(n, *hop, p);
}

void Simulator::enqueue(NodeId node, PortId egress, Packet packet) {
  auto& ns = nodes_[node.value];
  auto& acct = ns.ingress[packet.ingress.value];
  acct.buffered_bytes += packet.size;
  ns.buffered_bytes += packet.size;
  if (ns.buffered_bytes > config_.pfc.buffer_bytes) {
    throw SimulationError("lossless buffer overflow at " + topology_.name(node) + " (" +
                          std::to_string(ns.buffered_bytes) + " bytes)");
  }
  ns.flow_bytes[{packet.ingress.value, packet.flow.value}] += packet.size;
  auto& q = ns.egress[egress.value];
  const auto ingress = packet.ingress;
  const auto size = packet.size;
  q.fifo.push_back(std::move(packet));
  q.bytes_queued += size;
  apply(node, ns.detector.on_enqueue(ingress, egress, size, now_));
  if (!acct.pausing_upstream && acct.buffered_bytes >= config_.pfc.xoff_bytes) send_pause(node, ingress);
  try_transmit(PortRef{node, egress});
}

void Simulator::send_frame(PortRef from, ev::Frame frame) {
  auto lid = topology_.link_at(from);
  if (!lid) return;
  const auto& link = topology_.link(*lid);
  if (!link.up) return;
  schedule(now_ + link.delay, ev::FrameArrival{topology_.peer(from), link_epoch_[lid->value], std::move(frame)});
}

void Simulator::send_pause(NodeId node, PortId ingress) {
  auto& ns = nodes_[node.value];
  auto& acct = ns.ingress[ingress.value];
  acct.pausing_upstream = true;
  ++acct.pauses_sent;
  auto fx = ns.detector.on_pause_generated(ingress, now_);
  ev::Frame frame{ev::Frame::Kind::kPause, std::move(fx.piggyback), std::nullopt};
  fx.piggyback.clear();
  ++messages_.pause_frames;
  messages_.checking_piggybacked += frame.checking.size();
  trace(now_, "PAUSE", node, ingress.value, Json{{"buffered", acct.buffered_bytes}, {"cms", frame.checking.size()}});
  send_frame(PortRef{node, ingress}, std::move(frame));
  apply(node, std::move(fx));
}

void Simulator::send_resume(NodeId node, PortId ingress) {
  auto& ns = nodes_[node.value];
  auto& acct = ns.ingress[ingress.value];
  acct.pausing_upstream = false;
  ns.detector.on_resume_generated(ingress);
  ++messages_.resume_frames;
  trace(now_, "RESUME", node, ingress.value, Json{{"buffered", acct.buffered_bytes}});
  send_frame(PortRef{node, ingress}, ev::Frame{ev::Frame::Kind::kResume, {}, std::nullopt});
}

void Simulator::handle(const ev::FrameArrival& e) {
  const auto lid = *topology_.link_at(e.port);
  if (e.link_epoch != link_epoch_[lid.value]) return;
  const NodeId n = e.port.node;
  auto& ns = nodes_[n.value];
  auto& q = ns.egress[e.port.port.value];
  switch (e.frame.kind) {
    case ev::Frame::Kind::kPause: {
      if (!q.honor_pause) {
        trace(now_, "PAUSE_IGNORED", n, e.port.port.value);
        return;
      }
      ++q.pauses_received;
      if (!q.paused) {
        q.paused = true;
        q.paused_since = now_;
      }
      apply(n, ns.detector.on_pause_received(e.port.port, e.frame.checking, now_));
      return;
    }
    case ev::Frame::Kind::kResume: {
      if (!q.honor_pause) return;
      if (!q.paused) {
        trace(now_, "RESUME_UNEXPECTED", n, e.port.port.value);
        return;
      }
      q.paused = false;
      ++q.resumes_received;
      apply(n, ns.detector.on_resume_received(e.port.port, now_));
      try_transmit(e.port);
      return;
    }
    case ev::Frame::Kind::kChecking:
      for (const auto& cm : e.frame.checking)
        apply(n, ns.detector.on_checking_message_received(e.port.port, cm, now_));
      return;
    case ev::Frame::Kind::kCheck:
      apply(n, ns.detector.on_temporal_check_received(e.port.port, *e.frame.check, now_));
      return;
  }
}

void Simulator::apply(NodeId node, detect::Effects&& fx) {
  if (!fx.piggyback.empty()) throw SimulationError("checking metadata produced outside a pause");
  for (auto& r : fx.records) {
    if (r.kind == "LOOP_DECLARED") {
      loop_declarations_.push_back(r);
      if (stop_on_loop_) stop_requested_ = true;
    }
    if (config_.record_trace) trace_->add(std::move(r));
  }
  for (auto& [port, cm] : fx.checking) {
    ++messages_.checking_packets;
    send_frame(PortRef{node, port}, ev::Frame{ev::Frame::Kind::kChecking, {cm}, std::nullopt});
  }
  for (auto& [port, tc] : fx.checks) {
    ++messages_.check_packets;
    send_frame(PortRef{node, port}, ev::Frame{ev::Frame::Kind::kCheck, {}, std::move(tc)});
  }
  for (const auto& t : fx.timers) schedule(now_ + t.delay, ev::DetectorTimer{node, t});
  for (auto& r : fx.reports) {
    reports_.push_back(std::move(r));
    if (stop_on_report_) stop_requested_ = true;
  }
}

void Simulator::handle(const ev::DetectorTimer& e) {
  apply(e.node, nodes_[e.node.value].detector.on_timer(e.timer, now_));
}

void Simulator::handle(const ev::Failure& e) {
  const auto& f = failures_[e.index];
  const auto& link = topology_.link(f.link);
  const std::string label = topology_.name(link.a.node) + "-" + topology_.name(link.b.node);
  if (!link.up) throw ScenarioError("failure at " + std::to_string(f.at) + " ns: link " + label + " is already down");
  const auto changed = topology_.fail_link(f.link, f.overrides);
  ++link_epoch_[f.link.value];
  trace(now_, "LINK_DOWN", link.a.node, link.a.port.value,
        Json{{"peer", port_json(link.b)}, {"routes_changed", changed}});
  for (const auto end : {link.a, link.b}) {
    auto& ns = nodes_[end.node.value];
    auto& q = ns.egress[end.port.value];
    ++q.tx_epoch;
    std::vector<Packet> lost;
    if (q.in_service) lost.push_back(*q.in_service);
    q.in_service.reset();
    for (auto& p : q.fifo) lost.push_back(p);
    q.fifo.clear();
    q.bytes_queued = 0;
    for (const auto& p : lost) {
      drop(p, end.node, "link_down");
      release(end.node, p, end.port);
    }
    if (q.paused) {
      q.paused = false;
      apply(end.node, ns.detector.on_resume_received(end.port, now_));
    }
  }
}

void Simulator::handle(const ev::Misbehave& e) {
  const auto& m = misbehaving_[e.index];
  auto& ns = nodes_[m.server.value];
  if (e.pause) {
    if (now_ >= m.stop) return;
    if (!ns.asserting_pause) {
      ns.asserting_pause = true;
      send_pause(m.server, PortId{0});
    }
    if (m.pause_duration > 0) schedule(now_ + m.pause_duration, ev::Misbehave{e.index, false});
    if (m.period > 0) schedule(now_ + m.period, ev::Misbehave{e.index, true});
  } else if (ns.asserting_pause) {
    ns.asserting_pause = false;
    send_resume(m.server, PortId{0});
  }
}

std::uint64_t Simulator::drain_queue(PortRef egress, std::optional<PortId> until_resumed, const std::string& reason) {
  auto& ns = nodes_.at(egress.node.value);
  auto& q = ns.egress.at(egress.port.value);
  std::uint64_t dropped = 0;
  while (!q.fifo.empty()) {
    if (until_resumed && !ns.ingress.at(until_resumed->value).pausing_upstream) break;
    Packet p = q.fifo.front();
    q.fifo.pop_front();
    q.bytes_queued -= p.size;
    ++flows_[p.flow.value].dropped;
    ++drops_[reason];
    release(egress.node, p, egress.port);
    ++dropped;
  }
  return dropped;
}

void Simulator::notify_loop_broken(PortRef initiator) {
  auto& ns = nodes_.at(initiator.node.value);
  apply(initiator.node, ns.detector.on_loop_broken(initiator.port, now_));
}

void Simulator::mute_pause(PortRef egress) {
  auto& ns = nodes_.at(egress.node.value);
  auto& q = ns.egress.at(egress.port.value);
  q.honor_pause = false;
  if (q.paused) {
    q.paused = false;
    apply(egress.node, ns.detector.on_resume_received(egress.port, now_));
  }
  try_transmit(egress);
}

void Simulator::throttle_flow(FlowId flow, double fraction) {
  auto& f = flows_.at(flow.value);
  f.current_rate_bps = f.spec.rate_bps * fraction;
}

void Simulator::check_conservation() const {
  std::vector<std::uint64_t> queued(flows_.size(), 0);
  for (const auto& ns : nodes_) {
    for (const auto& q : ns.egress) {
      if (q.in_service) ++queued[q.in_service->flow.value];
      for (const auto& p : q.fifo) ++queued[p.flow.value];
    }
  }
  for (std::size_t i = 0; i < flows_.size(); ++i) {
    const auto& f = flows_[i];
    if (f.injected != f.delivered + f.dropped + f.in_flight + queued[i]) {
      std::ostringstream msg;
      msg << "conservation violated for flow '" << f.spec.name << "': injected " << f.injected << ", delivered "
          << f.delivered << ", dropped " << f.dropped << ", in flight " << f.in_flight << ", queued " << queued[i];
      throw SimulationError(msg.str());
    }
  }
}

void Simulator::check_traffic_mapping() const {
  for (auto sw : topology_.switches()) {
    const auto& ns = nodes_[sw.value];
    const auto ports = ns.egress.size();
    std::vector<std::uint64_t> scan(ports * ports, 0);
    for (std::size_t e = 0; e < ports; ++e) {
      const auto& q = ns.egress[e];
      if (q.in_service) scan[q.in_service->ingress.value * ports + e] += q.in_service->size;
      for (const auto& p : q.fifo) scan[p.ingress.value * ports + e] += p.size;
    }
    for (std::uint16_t i = 0; i < ports; ++i) {
      for (std::uint16_t e = 0; e < ports; ++e) {
        if ((scan[i * ports + e] > 0) != ns.detector.tm_bit(PortId{i}, PortId{e})) {
          throw SimulationError("traffic mapping mismatch at " + port_name(topology_, PortRef{sw, PortId{i}}) +
                                " -> port " + std::to_string(e));
        }
      }
    }
  }
}

}  // namespace dcfit::sim
