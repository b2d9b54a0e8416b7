#include "dcfit/dcfit.hpp"

#include <algorithm>

namespace dcfit::detect {

namespace {

Json cm_json(const CheckingMessage& m) {
  Json j = Json::object();
  j["ini"] = Json::array({m.s_gen_ini.value, m.p_gen_ini.value});
  j["seq"] = m.seq_id;
  j["trigger"] = port_json(m.trigger);
  j["hops"] = m.hops;
  return j;
}

void put_cm(TraceRecord& r, const CheckingMessage& m) {
  const Json j = cm_json(m);
  for (const auto& [k, v] : j.items()) r.attrs[k] = v;
}

const char* kind_name(EpisodeKind kind) {
  switch (kind) {
    case EpisodeKind::kTrigger: return "trigger";
    case EpisodeKind::kMiddle: return "middle";
    case EpisodeKind::kRearm: return "rearm";
  }
  return "?";
}

Json ports_json(const std::vector<PortRef>& ports) {
  Json j = Json::array();
  for (const auto& p : ports) j.push_back(port_json(p));
  return j;
}

}  // namespace

const char* to_string(TriggerLocation location) {
  return location == TriggerLocation::kOnLoop ? "on_loop" : "out_of_loop";
}

Detector::Detector(NodeId self, NodeKind kind, std::size_t ports, DetectorConfig config)
    : self_(self),
      kind_(kind),
      ports_(ports),
      config_(config),
      tm_(ports * ports, 0),
      pausing_(ports, false),
      paused_(ports, false),
      resume_tag_(ports, false),
      stored_(ports),
      sent_(ports),
      episodes_(ports),
      seq_counter_(ports, 0),
      pending_middle_(ports) {
  if (config_.capacity == 0) throw ConfigError("detector capacity must be at least 1");
}

TraceRecord Detector::record(SimTime now, const char* kind, std::int32_t port) const {
  return TraceRecord{now, kind, self_, port, Json::object()};
}

StoredEntry* Detector::find_entry(PortId egress, InitiatorKey key) {
  for (auto& e : stored_[egress.value])
    if (e.key == key) return &e;
  return nullptr;
}

const StoredEntry* Detector::find_entry(PortId egress, InitiatorKey key) const {
  for (const auto& e : stored_[egress.value])
    if (e.key == key) return &e;
  return nullptr;
}

StoredEntry& Detector::insert_entry(PortId egress, InitiatorKey key) {
  auto& slots = stored_[egress.value];
  if (slots.size() < config_.capacity) {
    StoredEntry fresh;
    fresh.key = key;
    slots.push_back(fresh);
    return slots.back();
  }
  // Evict the oldest tombstone, else the oldest live entry.
  auto victim = slots.end();
  for (auto it = slots.begin(); it != slots.end(); ++it) {
    if (!it->active && (victim == slots.end() || it->stamp < victim->stamp)) victim = it;
  }
  if (victim == slots.end()) {
    victim = std::min_element(slots.begin(), slots.end(),
                              [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
  }
  ++counters_.overflow;
  *victim = StoredEntry{};
  victim->key = key;
  return *victim;
}

std::uint64_t Detector::sent_seq(PortId ingress, InitiatorKey key) const {
  for (const auto& m : sent_[ingress.value])
    if (m.key == key) return m.seq_id;
  return 0;
}

void Detector::mark_sent(PortId ingress, InitiatorKey key, std::uint64_t seq) {
  for (auto& m : sent_[ingress.value]) {
    if (m.key == key) {
      m.seq_id = std::max(m.seq_id, seq);
      return;
    }
  }
  sent_[ingress.value].push_back(SentMark{key, seq});
}

std::optional<PortId> Detector::congested_egress(PortId ingress) const {
  std::optional<PortId> best;
  std::uint64_t most = 0;
  for (std::uint16_t e = 0; e < ports_; ++e) {
    auto bytes = tm_at(ingress, PortId{e});
    if (bytes > most) {
      most = bytes;
      best = PortId{e};
    }
  }
  return best;
}

Effects Detector::on_enqueue(PortId ingress, PortId egress, std::uint64_t bytes, SimTime now) {
  auto& count = tm_at(ingress, egress);
  const bool rise = count == 0;
  count += bytes;
  Effects fx;
  if (!rise || !config_.enabled || kind_ == NodeKind::kServer) return fx;
  if (pausing_[ingress.value] && paused_[egress.value]) propagate(egress, ingress, now, fx);
  try_close(ingress, egress, now, fx);
  return fx;
}

void Detector::on_dequeue(PortId ingress, PortId egress, std::uint64_t bytes) {
  auto& count = tm_at(ingress, egress);
  if (count < bytes) throw SimulationError("traffic mapping underflow");
  count -= bytes;
}

CheckingMessage Detector::start_episode(PortId ingress, EpisodeKind kind, PortRef trigger,
                                        std::uint32_t exposing_hops, SimTime now, Effects& fx) {
  auto& ep = episodes_[ingress.value];
  ep = Episode{};
  ep.live = true;
  ep.seq_id = ++seq_counter_[ingress.value];
  ep.kind = kind;
  ep.trigger = trigger;
  ep.exposing_hops = exposing_hops;
  CheckingMessage cm{self_, ingress, ep.seq_id, trigger, 0};
  if (kind == EpisodeKind::kTrigger) {
    auto r = record(now, "TRIGGER_IDENTIFIED", ingress.value);
    r.attrs["seq"] = ep.seq_id;
    fx.records.push_back(std::move(r));
  }
  auto r = record(now, "CM_SENT", ingress.value);
  put_cm(r, cm);
  r.attrs["episode"] = kind_name(kind);
  fx.records.push_back(std::move(r));
  return cm;
}

Effects Detector::on_pause_generated(PortId ingress, SimTime now) {
  pausing_[ingress.value] = true;
  sent_[ingress.value].clear();
  Effects fx;
  if (!config_.enabled) return fx;
  if (kind_ == NodeKind::kServer) {
    fx.piggyback.push_back(start_episode(ingress, EpisodeKind::kTrigger, {self_, ingress}, 0, now, fx));
    ++counters_.checking_piggybacked;
    return fx;
  }

  const auto congested = congested_egress(ingress);
  const bool trigger = !congested || !paused_[congested->value];
  std::optional<PortRef> own_trigger;
  std::optional<PendingMiddle> middle;
  std::vector<CheckingMessage> carry;
  const InitiatorKey own{self_, ingress};
  for (std::uint16_t q = 0; q < ports_; ++q) {
    if (!paused_[q] || tm_at(ingress, PortId{q}) == 0) continue;
    if (!middle && pending_middle_[q]) middle = pending_middle_[q];
    for (const auto& e : stored_[q]) {
      if (!e.active) continue;
      if (e.key == own) {
        if (!own_trigger) own_trigger = e.trigger;
        continue;
      }
      if (e.key.node == self_) continue;
      auto it = std::find_if(carry.begin(), carry.end(), [&](const auto& c) { return c.key() == e.key; });
      CheckingMessage m{e.key.node, e.key.port, e.seq_id, e.trigger, e.hops};
      if (it == carry.end()) {
        carry.push_back(m);
      } else if (it->seq_id < e.seq_id) {
        *it = m;
      }
    }
  }

  if (trigger) {
    fx.piggyback.push_back(start_episode(ingress, EpisodeKind::kTrigger, PortRef{self_, ingress}, 0, now, fx));
  } else if (own_trigger) {
    fx.piggyback.push_back(start_episode(ingress, EpisodeKind::kRearm, *own_trigger, 0, now, fx));
  } else if (middle) {
    fx.piggyback.push_back(
        start_episode(ingress, EpisodeKind::kMiddle, middle->trigger, middle->exposing_hops, now, fx));
  } else if (carry.empty()) {
    fx.piggyback.push_back(start_episode(ingress, EpisodeKind::kTrigger, PortRef{self_, ingress}, 0, now, fx));
    fx.records.back().attrs["degenerate"] = true;
  }
  for (const auto& m : carry) {
    fx.piggyback.push_back(m);
    mark_sent(ingress, m.key(), m.seq_id);
    auto r = record(now, "CM_FORWARDED", ingress.value);
    put_cm(r, m);
    r.attrs["via"] = "pause";
    fx.records.push_back(std::move(r));
  }
  counters_.checking_piggybacked += fx.piggyback.size();
  return fx;
}

void Detector::on_resume_generated(PortId ingress) {
  pausing_[ingress.value] = false;
  sent_[ingress.value].clear();
  episodes_[ingress.value].live = false;
}

Effects Detector::on_pause_received(PortId egress, const std::vector<CheckingMessage>& piggyback, SimTime now) {
  paused_[egress.value] = true;
  resume_tag_[egress.value] = false;
  Effects fx;
  if (!config_.enabled || kind_ == NodeKind::kServer) return fx;
  for (const auto& m : piggyback) receive(egress, m, true, now, fx);
  return fx;
}

Effects Detector::on_resume_received(PortId egress, SimTime now) {
  paused_[egress.value] = false;
  resume_tag_[egress.value] = true;
  for (auto& e : stored_[egress.value]) {
    e.active = false;
    e.resumed = true;
  }
  pending_middle_[egress.value].reset();
  Effects fx;
  if (!config_.enabled || kind_ == NodeKind::kServer) return fx;
  // A confirmed loop through this egress is gone; probe again if the ingress stays paused.
  for (std::uint16_t p = 0; p < ports_; ++p) {
    const auto& ep = episodes_[p];
    if (ep.live && ep.confirmed && ep.closing == egress) rearm(PortId{p}, now, fx);
  }
  return fx;
}

Effects Detector::on_loop_broken(PortId ingress, SimTime now) {
  Effects fx;
  if (!config_.enabled || kind_ == NodeKind::kServer) return fx;
  if (episodes_.at(ingress.value).live && pausing_[ingress.value]) rearm(ingress, now, fx);
  return fx;
}

void Detector::rearm(PortId p, SimTime now, Effects& fx) {
  auto& ep = episodes_[p.value];
  ep.confirmed = false;
  ep.loop_declared = false;
  ep.rechecks = 0;
  ep.seq_id = ++seq_counter_[p.value];
  CheckingMessage cm{self_, p, ep.seq_id, ep.trigger, 0};
  fx.checking.emplace_back(p, cm);
  ++counters_.checking_sent;
  auto r = record(now, "CM_SENT", p.value);
  put_cm(r, cm);
  r.attrs["episode"] = "rearm";
  fx.records.push_back(std::move(r));
}

Effects Detector::on_checking_message_received(PortId egress, CheckingMessage msg, SimTime now) {
  Effects fx;
  if (!config_.enabled || kind_ == NodeKind::kServer) return fx;
  receive(egress, msg, false, now, fx);
  return fx;
}

void Detector::receive(PortId q, CheckingMessage msg, bool via_pause, SimTime now, Effects& fx) {
  msg.hops += 1;
  if (!paused_[q.value]) {
    auto r = record(now, "CM_DROPPED", q.value);
    put_cm(r, msg);
    r.attrs["reason"] = "port_not_paused";
    fx.records.push_back(std::move(r));
    return;
  }
  const auto key = msg.key();
  StoredEntry* entry = find_entry(q, key);
  if (entry && entry->seq_id > msg.seq_id) return;  // stale
  if (entry && entry->seq_id == msg.seq_id) {
    if (entry->active) {
      // A foreign message that travelled back around a loop to the port holding it.
      if (key.node != self_ && msg.hops > entry->hops) {
        StoredEntry returned = *entry;
        returned.hops = msg.hops;
        detect_middle_switch(q, returned, q, *entry, now, fx);
      }
      return;
    }
    // Same episode seen again after this port resumed: the tag stays set.
    entry->active = true;
    entry->resumed = true;
    entry->hops = msg.hops;
    entry->stamp = ++stamp_;
  } else {
    if (!entry) entry = &insert_entry(q, key);
    *entry = StoredEntry{key, msg.seq_id, msg.trigger, msg.hops, true, false, ++stamp_};
  }
  const StoredEntry stored = *entry;

  if (key.node == self_) {
    const PortId p = key.port;
    if (!episodes_[p.value].live && pausing_[p.value] && tm_at(p, q) > 0) {
      // A message from an ended episode of ours came back around a loop.
      auto cm = start_episode(p, EpisodeKind::kRearm, stored.trigger, 0, now, fx);
      fx.checking.emplace_back(p, cm);
      ++counters_.checking_sent;
      return;
    }
    try_close(p, q, now, fx);
    return;
  }

  for (std::uint16_t other = 0; other < ports_; ++other) {
    if (other == q.value) continue;
    const StoredEntry* twin = find_entry(PortId{other}, key);
    if (twin && twin->active) {
      detect_middle_switch(q, stored, PortId{other}, *twin, now, fx);
      break;
    }
  }

  propagate(q, std::nullopt, now, fx);
  bool carried = false;
  for (std::uint16_t j = 0; j < ports_ && !carried; ++j) carried = sent_seq(PortId{j}, key) >= msg.seq_id;
  if (!carried) {
    auto r = record(now, "CM_HELD", q.value);
    put_cm(r, msg);
    r.attrs["via"] = via_pause ? "pause" : "packet";
    fx.records.push_back(std::move(r));
  }
}

std::size_t Detector::propagate(PortId q, std::optional<PortId> only, SimTime now, Effects& fx) {
  std::size_t sends = 0;
  for (const auto& e : stored_[q.value]) {
    if (!e.active || e.key.node == self_) continue;
    for (std::uint16_t j = 0; j < ports_; ++j) {
      if (only && only->value != j) continue;
      if (!pausing_[j] || tm_at(PortId{j}, q) == 0) continue;
      if (sent_seq(PortId{j}, e.key) >= e.seq_id) continue;
      CheckingMessage m{e.key.node, e.key.port, e.seq_id, e.trigger, e.hops};
      fx.checking.emplace_back(PortId{j}, m);
      mark_sent(PortId{j}, e.key, e.seq_id);
      ++counters_.checking_sent;
      ++sends;
      auto r = record(now, "CM_FORWARDED", j);
      put_cm(r, m);
      r.attrs["from"] = q.value;
      r.attrs["via"] = "packet";
      fx.records.push_back(std::move(r));
    }
  }
  return sends;
}

void Detector::detect_middle_switch(PortId q, const StoredEntry& entry, PortId other_port,
                                    const StoredEntry& other, SimTime now, Effects& fx) {
  const std::uint32_t exposing = entry.hops > other.hops ? entry.hops - other.hops : entry.hops;
  std::size_t causal = 0;
  std::size_t started = 0;
  for (std::uint16_t j = 0; j < ports_; ++j) {
    if (!pausing_[j] || tm_at(PortId{j}, q) == 0) continue;
    ++causal;
    if (episodes_[j].live) continue;
    auto cm = start_episode(PortId{j}, EpisodeKind::kMiddle, entry.trigger, exposing, now, fx);
    fx.checking.emplace_back(PortId{j}, cm);
    ++counters_.checking_sent;
    ++started;
  }
  if (causal == 0) pending_middle_[q.value] = PendingMiddle{entry.trigger, exposing};
  auto r = record(now, "MIDDLE_SWITCH", q.value);
  r.attrs["ini"] = Json::array({entry.key.node.value, entry.key.port.value});
  r.attrs["trigger"] = port_json(entry.trigger);
  r.attrs["ports"] = Json::array({other_port.value, q.value});
  r.attrs["seqs"] = Json::array({other.seq_id, entry.seq_id});
  r.attrs["started"] = started;
  r.attrs["pending"] = causal == 0;
  fx.records.push_back(std::move(r));
}

void Detector::try_close(PortId p, PortId q, SimTime now, Effects& fx) {
  if (kind_ == NodeKind::kServer) return;
  auto& ep = episodes_[p.value];
  if (!ep.live || ep.loop_declared || ep.confirmed) return;
  const StoredEntry* e = find_entry(q, {self_, p});
  if (!e || !e->active || e->seq_id != ep.seq_id) return;
  if (!paused_[q.value] || !pausing_[p.value] || tm_at(p, q) == 0) return;
  ep.loop_declared = true;
  ep.closing = q;
  ep.t_loop_detected = now;
  ep.closure_hops = e->hops;
  auto r = record(now, "LOOP_DECLARED", p.value);
  r.attrs["ini"] = Json::array({self_.value, p.value});
  r.attrs["seq"] = ep.seq_id;
  r.attrs["closing"] = q.value;
  r.attrs["hops"] = e->hops;
  fx.records.push_back(std::move(r));
  fx.timers.push_back(Timer{config_.temporal_check_delay, TimerKind::kLaunchCheck, p, ep.seq_id});
}

void Detector::launch_temporal_check(PortId p, SimTime now, Effects& fx) {
  const auto& ep = episodes_[p.value];
  TemporalCheckPacket tc{self_, p, ep.seq_id, 0, {}, {PortRef{self_, p}}};
  fx.checks.emplace_back(p, tc);
  ++counters_.checks_sent;
  auto r = record(now, "TC_SENT", p.value);
  r.attrs["ini"] = Json::array({self_.value, p.value});
  r.attrs["seq"] = ep.seq_id;
  fx.records.push_back(std::move(r));
  fx.timers.push_back(Timer{config_.check_timeout, TimerKind::kCheckTimeout, p, ep.seq_id});
}

Effects Detector::on_timer(const Timer& timer, SimTime now) {
  Effects fx;
  if (!config_.enabled) return fx;
  auto& ep = episodes_[timer.port.value];
  if (!ep.live || ep.seq_id != timer.seq_id || ep.confirmed) return fx;
  if (timer.kind == TimerKind::kLaunchCheck) {
    if (ep.loop_declared) launch_temporal_check(timer.port, now, fx);
    return fx;
  }
  if (ep.rechecks >= config_.max_rechecks) {
    auto r = record(now, "RECHECK_LIMIT", timer.port.value);
    r.attrs["seq"] = ep.seq_id;
    fx.records.push_back(std::move(r));
    return fx;
  }
  // The check never came back: restart the episode under a fresh seq.
  ++ep.rechecks;
  ep.seq_id = ++seq_counter_[timer.port.value];
  ep.loop_declared = false;
  CheckingMessage cm{self_, timer.port, ep.seq_id, ep.trigger, 0};
  fx.checking.emplace_back(timer.port, cm);
  ++counters_.checking_sent;
  auto r = record(now, "CM_SENT", timer.port.value);
  put_cm(r, cm);
  r.attrs["episode"] = "recheck";
  fx.records.push_back(std::move(r));
  return fx;
}

void Detector::drop_check(const TemporalCheckPacket& pkt, PortId q, const char* reason, SimTime now,
                          Effects& fx) {
  auto r = record(now, "TC_DROPPED", q.value);
  r.attrs["ini"] = Json::array({pkt.s_gen_ini.value, pkt.p_gen_ini.value});
  r.attrs["seq"] = pkt.seq_id;
  r.attrs["hops"] = pkt.hop_count;
  r.attrs["reason"] = reason;
  fx.records.push_back(std::move(r));
}

Effects Detector::on_temporal_check_received(PortId q, TemporalCheckPacket pkt, SimTime now) {
  Effects fx;
  if (!config_.enabled || kind_ == NodeKind::kServer) return fx;
  pkt.hop_count += 1;
  const auto key = pkt.key();
  const StoredEntry* e = find_entry(q, key);

  if (pkt.s_gen_ini == self_) {
    const PortId p = pkt.p_gen_ini;
    auto& ep = episodes_.at(p.value);
    if (!ep.live || ep.seq_id != pkt.seq_id) return drop_check(pkt, q, "seq_mismatch", now, fx), fx;
    if (ep.confirmed) return drop_check(pkt, q, "already_confirmed", now, fx), fx;
    if (!ep.loop_declared) return drop_check(pkt, q, "seq_mismatch", now, fx), fx;
    if (!e) return drop_check(pkt, q, "no_entry", now, fx), fx;
    if (e->seq_id != pkt.seq_id) return drop_check(pkt, q, "seq_mismatch", now, fx), fx;
    if (!e->active || e->resumed || !paused_[q.value]) return drop_check(pkt, q, "resume_tag", now, fx), fx;
    if (!pausing_[p.value] || tm_at(p, q) == 0) return drop_check(pkt, q, "no_causal_port", now, fx), fx;
    if (tm_at(p, q) <= config_.hold_bytes.value_or(0)) return drop_check(pkt, q, "draining", now, fx), fx;

    ep.confirmed = true;
    DeadlockReport rep;
    rep.initiator = PortRef{self_, p};
    rep.seq_id = ep.seq_id;
    rep.loop_ports = pkt.path;
    rep.loop_ports.push_back(PortRef{self_, q});
    rep.loop_ingress = pkt.ingress_path;
    rep.t_loop_detected = ep.t_loop_detected;
    rep.t_confirmed = now;
    rep.trigger = ep.trigger;
    const bool on_loop =
        std::find(rep.loop_ingress.begin(), rep.loop_ingress.end(), ep.trigger) != rep.loop_ingress.end();
    rep.trigger_location = on_loop ? TriggerLocation::kOnLoop : TriggerLocation::kOutOfLoop;
    rep.closure_hops = ep.closure_hops;
    rep.check_hops = pkt.hop_count;
    rep.exposing_hops = ep.kind == EpisodeKind::kMiddle ? ep.exposing_hops : 0;
    rep.hop_count = rep.closure_hops + rep.check_hops + rep.exposing_hops;

    auto r = record(now, "DEADLOCK_CONFIRMED", p.value);
    r.attrs["ini"] = Json::array({self_.value, p.value});
    r.attrs["seq"] = rep.seq_id;
    r.attrs["loop"] = ports_json(rep.loop_ports);
    r.attrs["trigger"] = port_json(rep.trigger);
    r.attrs["location"] = to_string(rep.trigger_location);
    r.attrs["t_loop"] = rep.t_loop_detected;
    r.attrs["hops"] = rep.hop_count;
    fx.records.push_back(std::move(r));
    fx.reports.push_back(std::move(rep));
    return fx;
  }

  if (!e) return drop_check(pkt, q, "no_entry", now, fx), fx;
  if (e->seq_id != pkt.seq_id) return drop_check(pkt, q, "seq_mismatch", now, fx), fx;
  if (!e->active || e->resumed || !paused_[q.value]) return drop_check(pkt, q, "resume_tag", now, fx), fx;
  const PortRef here{self_, q};
  if (std::find(pkt.path.begin(), pkt.path.end(), here) != pkt.path.end())
    return drop_check(pkt, q, "revisit", now, fx), fx;

  std::vector<PortId> targets;
  for (std::uint16_t j = 0; j < ports_; ++j) {
    if (pausing_[j] && tm_at(PortId{j}, q) > 0 && sent_seq(PortId{j}, key) == pkt.seq_id)
      targets.push_back(PortId{j});
  }
  if (targets.empty()) return drop_check(pkt, q, "no_causal_port", now, fx), fx;
  // An ingress holding no more than XON for q can still resume by draining elsewhere.
  std::erase_if(targets, [&](PortId j) { return tm_at(j, q) <= config_.hold_bytes.value_or(0); });
  if (targets.empty()) return drop_check(pkt, q, "draining", now, fx), fx;
  // Two initiators on one loop: the confirmed one, else the lower key, wins.
  for (auto j : targets) {
    const auto& ep = episodes_[j.value];
    if (!ep.live || ep.closing != q) continue;
    if (ep.confirmed || (ep.loop_declared && InitiatorKey{self_, j} < key))
      return drop_check(pkt, q, "deferred", now, fx), fx;
  }

  pkt.path.push_back(here);
  for (auto j : targets) {
    auto copy = pkt;
    copy.ingress_path.push_back(PortRef{self_, j});
    fx.checks.emplace_back(j, std::move(copy));
    ++counters_.checks_sent;
    auto r = record(now, "TC_FORWARDED", j.value);
    r.attrs["ini"] = Json::array({key.node.value, key.port.value});
    r.attrs["seq"] = pkt.seq_id;
    r.attrs["from"] = q.value;
    r.attrs["hops"] = pkt.hop_count;
    fx.records.push_back(std::move(r));
  }
  return fx;
}

std::uint64_t detector_state_size(std::uint32_t ports, std::uint32_t switch_id_bits,
                                  std::uint32_t port_id_bits, std::uint32_t seq_bits,
                                  std::uint32_t capacity) {
  if (ports == 0) throw ConfigError("detector_state_size needs at least one port");
  const std::uint64_t n = ports;
  const std::uint64_t bits = n * n + n + n +
                             n * capacity * (static_cast<std::uint64_t>(switch_id_bits) + port_id_bits + seq_bits);
  return (bits + 7) / 8;
}

}  // namespace dcfit::detect
