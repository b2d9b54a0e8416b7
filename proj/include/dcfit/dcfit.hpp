#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dcfit/common.hpp"
#include "dcfit/trace.hpp"

namespace dcfit::detect {

/// (S_gen-ini, P_gen-ini): the port that roots one detection episode.
struct InitiatorKey {
  NodeId node;
  PortId port;
  friend constexpr auto operator<=>(const InitiatorKey&, const InitiatorKey&) = default;
};

/// Detection metadata carried on PAUSE frames or in synthesized detector packets.
/// `trigger` is the initial trigger that exposed the episode and `hops` counts
/// links traversed since the message was created.
struct CheckingMessage {
  NodeId s_gen_ini;
  PortId p_gen_ini;
  std::uint64_t seq_id = 0;
  PortRef trigger;
  std::uint32_t hops = 0;

  InitiatorKey key() const { return {s_gen_ini, p_gen_ini}; }
};

struct TemporalCheckPacket {
  NodeId s_gen_ini;
  PortId p_gen_ini;
  std::uint64_t seq_id = 0;
  std::uint32_t hop_count = 0;
  /// Paused egress ports visited so far, in traversal order.
  std::vector<PortRef> path;
  /// Pausing ingress ports the packet left through (initiator port first).
  std::vector<PortRef> ingress_path;

  InitiatorKey key() const { return {s_gen_ini, p_gen_ini}; }
};

enum class TriggerLocation : std::uint8_t { kOnLoop, kOutOfLoop };
const char* to_string(TriggerLocation location);

struct DeadlockReport {
  PortRef initiator;
  std::uint64_t seq_id = 0;
  /// Paused egress ports in check traversal order; the last entry is the
  /// initiator's own closing port.
  std::vector<PortRef> loop_ports;
  /// Pausing ingress ports on the loop, initiator port first.
  std::vector<PortRef> loop_ingress;
  SimTime t_loop_detected = 0;
  SimTime t_confirmed = 0;
  PortRef trigger;
  TriggerLocation trigger_location = TriggerLocation::kOnLoop;
  /// Checking-message hops to close the loop + check hops + (for middle-switch
  /// episodes) the hops of the round that exposed the middle switch.
  std::uint32_t hop_count = 0;
  std::uint32_t closure_hops = 0;
  std::uint32_t check_hops = 0;
  std::uint32_t exposing_hops = 0;
};

struct DetectorConfig {
  std::size_t capacity = 4;
  SimTime temporal_check_delay = 100 * kMicrosecond;
  SimTime check_timeout = 50 * kMicrosecond;
  std::uint32_t max_rechecks = 32;
  /// A check only passes an (ingress, egress) hop whose mapped bytes exceed
  /// this; the simulator defaults it to the XON threshold. 0 accepts any
  /// nonzero mapping.
  std::optional<std::uint64_t> hold_bytes;
  bool enabled = true;
};

enum class TimerKind : std::uint8_t { kLaunchCheck, kCheckTimeout };

struct Timer {
  SimTime delay = 0;
  TimerKind kind = TimerKind::kLaunchCheck;
  PortId port;
  std::uint64_t seq_id = 0;
};

/// Everything a detector call asks the switch to do.
struct Effects {
  /// Metadata to attach to the PAUSE frame currently being generated.
  std::vector<CheckingMessage> piggyback;
  std::vector<std::pair<PortId, CheckingMessage>> checking;
  std::vector<std::pair<PortId, TemporalCheckPacket>> checks;
  std::vector<Timer> timers;
  std::vector<TraceRecord> records;
  std::vector<DeadlockReport> reports;

  bool empty() const {
    return piggyback.empty() && checking.empty() && checks.empty() && timers.empty() &&
           records.empty() && reports.empty();
  }
};

struct StoredEntry {
  InitiatorKey key;
  std::uint64_t seq_id = 0;
  PortRef trigger;
  std::uint32_t hops = 0;
  /// False once the port received RESUME (kept as a tombstone).
  bool active = true;
  /// Per-entry resume tag: set when the port resumed during this seq.
  bool resumed = false;
  std::uint64_t stamp = 0;
};

enum class EpisodeKind : std::uint8_t { kTrigger, kMiddle, kRearm };

struct Episode {
  bool live = false;
  std::uint64_t seq_id = 0;
  EpisodeKind kind = EpisodeKind::kTrigger;
  PortRef trigger;
  bool loop_declared = false;
  bool confirmed = false;
  PortId closing;
  SimTime t_loop_detected = 0;
  std::uint32_t closure_hops = 0;
  std::uint32_t exposing_hops = 0;
  std::uint32_t rechecks = 0;
};

struct DetectorCounters {
  std::uint64_t checking_sent = 0;
  std::uint64_t checking_piggybacked = 0;
  std::uint64_t checks_sent = 0;
  std::uint64_t overflow = 0;
};

/// Per-node DCFIT state machine. Pure with respect to the simulator: every
/// entry point returns the frames, timers, trace records and reports it wants
/// emitted and never touches queues.
class Detector {
 public:
  Detector() = default;
  Detector(NodeId self, NodeKind kind, std::size_t ports, DetectorConfig config);

  // Traffic mapping hooks (bytes moved between ingress i and egress e).
  Effects on_enqueue(PortId ingress, PortId egress, std::uint64_t bytes, SimTime now);
  void on_dequeue(PortId ingress, PortId egress, std::uint64_t bytes);

  Effects on_pause_generated(PortId ingress, SimTime now);
  void on_resume_generated(PortId ingress);
  Effects on_pause_received(PortId egress, const std::vector<CheckingMessage>& piggyback, SimTime now);
  Effects on_resume_received(PortId egress, SimTime now);
  Effects on_checking_message_received(PortId egress, CheckingMessage msg, SimTime now);
  Effects on_temporal_check_received(PortId egress, TemporalCheckPacket pkt, SimTime now);
  Effects on_timer(const Timer& timer, SimTime now);
  /// Recovery broke the loop this ingress confirmed: restart its episode.
  Effects on_loop_broken(PortId ingress, SimTime now);

  /// Egress for which `ingress` holds the most bytes (lowest port on ties).
  std::optional<PortId> congested_egress(PortId ingress) const;

  bool tm_bit(PortId ingress, PortId egress) const { return tm_at(ingress, egress) > 0; }
  std::uint64_t tm_bytes(PortId ingress, PortId egress) const { return tm_at(ingress, egress); }
  bool pausing(PortId ingress) const { return pausing_.at(ingress.value); }
  bool paused(PortId egress) const { return paused_.at(egress.value); }
  bool resume_tag(PortId egress) const { return resume_tag_.at(egress.value); }
  const std::vector<StoredEntry>& stored(PortId egress) const { return stored_.at(egress.value); }
  const Episode& episode(PortId ingress) const { return episodes_.at(ingress.value); }
  const DetectorCounters& counters() const { return counters_; }
  const DetectorConfig& config() const { return config_; }
  void set_enabled(bool enabled) { config_.enabled = enabled; }
  std::size_t port_count() const { return ports_; }

 private:
  struct SentMark {
    InitiatorKey key;
    std::uint64_t seq_id;
  };
  struct PendingMiddle {
    PortRef trigger;
    std::uint32_t exposing_hops = 0;
  };

  std::uint64_t& tm_at(PortId i, PortId e) { return tm_[static_cast<std::size_t>(i.value) * ports_ + e.value]; }
  std::uint64_t tm_at(PortId i, PortId e) const { return tm_[static_cast<std::size_t>(i.value) * ports_ + e.value]; }
  StoredEntry* find_entry(PortId egress, InitiatorKey key);
  const StoredEntry* find_entry(PortId egress, InitiatorKey key) const;
  StoredEntry& insert_entry(PortId egress, InitiatorKey key);
  std::uint64_t sent_seq(PortId ingress, InitiatorKey key) const;
  void mark_sent(PortId ingress, InitiatorKey key, std::uint64_t seq);

  CheckingMessage start_episode(PortId ingress, EpisodeKind kind, PortRef trigger,
                                std::uint32_t exposing_hops, SimTime now, Effects& fx);
  void receive(PortId egress, CheckingMessage msg, bool via_pause, SimTime now, Effects& fx);
  /// Forwards active foreign entries at `egress` to causal pausing ingress
  /// ports that have not carried them yet. Returns the number of sends.
  std::size_t propagate(PortId egress, std::optional<PortId> only_ingress, SimTime now, Effects& fx);
  void detect_middle_switch(PortId egress, const StoredEntry& entry, PortId other_port,
                            const StoredEntry& other, SimTime now, Effects& fx);
  void try_close(PortId ingress, PortId egress, SimTime now, Effects& fx);
  void rearm(PortId ingress, SimTime now, Effects& fx);
  void launch_temporal_check(PortId ingress, SimTime now, Effects& fx);
  void drop_check(const TemporalCheckPacket& pkt, PortId egress, const char* reason, SimTime now, Effects& fx);
  TraceRecord record(SimTime now, const char* kind, std::int32_t port) const;

  NodeId self_;
  NodeKind kind_ = NodeKind::kSwitch;
  std::size_t ports_ = 0;
  DetectorConfig config_;
  std::vector<std::uint64_t> tm_;
  std::vector<bool> pausing_;
  std::vector<bool> paused_;
  std::vector<bool> resume_tag_;
  std::vector<std::vector<StoredEntry>> stored_;
  std::vector<std::vector<SentMark>> sent_;
  std::vector<Episode> episodes_;
  std::vector<std::uint64_t> seq_counter_;
  std::vector<std::optional<PendingMiddle>> pending_middle_;
  std::uint64_t stamp_ = 0;
  DetectorCounters counters_;
};

/// Data-plane memory estimate in bytes: N^2 mapping bits + N pause bits +
/// N resume bits + N*C stored (switch id, port id, seq) tuples, rounded up.
std::uint64_t detector_state_size(std::uint32_t ports, std::uint32_t switch_id_bits,
                                  std::uint32_t port_id_bits, std::uint32_t seq_bits,
                                  std::uint32_t capacity);

}  // namespace dcfit::detect
