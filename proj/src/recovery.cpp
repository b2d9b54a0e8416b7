#include "dcfit/recovery.hpp"

namespace dcfit::recovery {

BreakResult break_deadlock(sim::Simulator& state, const detect::DeadlockReport& report) {
  if (report.loop_ports.empty() || report.loop_ingress.empty())
    throw PolicyError("report carries no loop to break");
  BreakResult out;
  out.drained = report.loop_ports.front();
  // loop_ports[0] is fed through the ingress the check entered second.
  const PortRef watched = report.loop_ingress.size() > 1 ? report.loop_ingress[1] : report.loop_ingress[0];
  std::optional<PortId> until;
  if (watched.node == out.drained.node) until = watched.port;
  const auto& q = state.node(out.drained.node).egress.at(out.drained.port.value);
  const std::size_t queued = q.fifo.size();
  out.packets = state.drain_queue(out.drained, until, "recovery_drain");
  out.loss_fraction = queued == 0 ? 0.0 : static_cast<double>(out.packets) / static_cast<double>(queued);
  Json attrs = Json::object();
  attrs["packets"] = out.packets;
  attrs["loss_fraction"] = out.loss_fraction;
  attrs["initiator"] = port_json(report.initiator);
  state.add_record(TraceRecord{state.now(), "DRAIN", out.drained.node, out.drained.port.value, std::move(attrs)});
  state.notify_loop_broken(report.initiator);
  return out;
}

std::optional<FlowId> heavy_hitter(const sim::Simulator& state, PortRef ingress) {
  std::optional<FlowId> best;
  std::uint64_t best_bytes = 0;
  for (const auto& [key, bytes] : state.node(ingress.node).flow_bytes) {
    if (key.first != ingress.port.value) continue;
    // Map order is by flow id within the port, so strict > keeps the lowest id.
    if (!best || bytes > best_bytes) {
      best = FlowId{key.second};
      best_bytes = bytes;
    }
  }
  return best;
}

FlowId rate_limit_heavy_hitter(sim::Simulator& state, PortRef trigger, double fraction) {
  if (state.topology().is_server(trigger.node))
    throw PolicyError("rate_limit_heavy_hitter needs a switch trigger");
  const auto flow = heavy_hitter(state, trigger);
  if (!flow) throw PolicyError("no traffic recorded at trigger port");
  state.throttle_flow(*flow, fraction);
  Json attrs = Json::object();
  attrs["flow"] = state.flow(*flow).spec.name;
  attrs["fraction"] = fraction;
  state.add_record(TraceRecord{state.now(), "THROTTLE", trigger.node, trigger.port.value, std::move(attrs)});
  return *flow;
}

std::string mitigate_trigger(sim::Simulator& state, const detect::DeadlockReport& report,
                             const RecoveryPolicy& policy) {
  switch (policy.trigger_action) {
    case TriggerAction::kNone:
      return "none";
    case TriggerAction::kMuteServerPause: {
      if (!state.topology().is_server(report.trigger.node))
        throw PolicyError("mute_server_pause needs a server trigger");
      const PortRef sw = state.topology().peer(report.trigger);
      state.mute_pause(sw);
      Json attrs = Json::object();
      attrs["server"] = state.topology().name(report.trigger.node);
      state.add_record(TraceRecord{state.now(), "MUTE", sw.node, sw.port.value, std::move(attrs)});
      return "muted " + state.topology().name(report.trigger.node);
    }
    case TriggerAction::kRateLimitHeavyHitter: {
      const auto flow = rate_limit_heavy_hitter(state, report.trigger, policy.rate_limit_fraction);
      return "throttled " + state.flow(flow).spec.name;
    }
  }
  return "none";
}

const char* to_string(BreakAction action) {
  return action == BreakAction::kDrainOneQueue ? "drain_one_queue" : "none";
}

const char* to_string(TriggerAction action) {
  switch (action) {
    case TriggerAction::kMuteServerPause:
      return "mute_server_pause";
    case TriggerAction::kRateLimitHeavyHitter:
      return "rate_limit_heavy_hitter";
    case TriggerAction::kNone:
      break;
  }
  return "none";
}

}  // namespace dcfit::recovery
