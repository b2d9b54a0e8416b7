#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dcfit/common.hpp"
#include "dcfit/dcfit.hpp"
#include "dcfit/net_model.hpp"
#include "dcfit/trace.hpp"

namespace dcfit::sim {

struct PfcConfig {
  std::uint32_t packet_bytes = 1000;
  std::uint64_t xoff_bytes = 80'000;
  std::uint64_t xon_bytes = 40'000;
  std::uint64_t buffer_bytes = 512'000;
  /// Server NIC transmit queue; a source that finds it full skips that packet.
  std::uint64_t nic_queue_bytes = 2'000;
};

struct FlowSpec {
  FlowId id;
  std::string name;
  NodeId src;
  NodeId dst;
  double rate_bps = 0.0;
  SimTime start = 0;
  SimTime stop = kNever;
  /// Total bytes to send; 0 means unbounded.
  std::uint64_t size_bytes = 0;
  bool malicious = false;
};

/// A server that asserts PAUSE toward its switch regardless of its buffers:
/// paused for `pause_duration` at the start of every `period`.
struct MisbehaviorSpec {
  NodeId server;
  SimTime start = 0;
  SimTime period = 0;
  SimTime pause_duration = 0;
  SimTime stop = kNever;
};

struct FailureSpec {
  SimTime at = 0;
  LinkId link;
  std::vector<net::RouteOverride> overrides;
};

struct SimConfig {
  PfcConfig pfc;
  detect::DetectorConfig detector;
  std::uint64_t seed = 1;
  /// Each flow's start is delayed by a seeded uniform draw from [0, start_jitter).
  SimTime start_jitter = 0;
  SimTime throughput_bin = 100 * kMicrosecond;
  bool record_trace = true;
};

struct Packet {
  std::uint64_t id = 0;
  FlowId flow;
  NodeId src;
  NodeId dst;
  std::uint32_t size = 0;
  /// Arrival port at the current hop; meaningless at the source server.
  PortId ingress;
};

struct EgressQueue {
  std::deque<Packet> fifo;
  std::optional<Packet> in_service;
  /// Bytes in fifo plus the packet being serialized.
  std::uint64_t bytes_queued = 0;
  bool paused = false;
  bool honor_pause = true;
  SimTime paused_since = 0;
  std::uint64_t departures = 0;
  std::uint64_t pauses_received = 0;
  std::uint64_t resumes_received = 0;
  std::uint64_t tx_epoch = 0;
};

struct IngressAccount {
  std::uint64_t buffered_bytes = 0;
  bool pausing_upstream = false;
  std::uint64_t pauses_sent = 0;
};

struct NodeState {
  std::vector<EgressQueue> egress;
  std::vector<IngressAccount> ingress;
  std::uint64_t buffered_bytes = 0;
  detect::Detector detector;
  /// Cumulative bytes per (ingress port, flow) for heavy-hitter selection.
  std::map<std::pair<std::uint16_t, std::uint32_t>, std::uint64_t> flow_bytes;
  /// Misbehaving server currently asserting pause.
  bool asserting_pause = false;
};

struct FlowState {
  FlowSpec spec;
  double current_rate_bps = 0.0;
  bool frozen = false;
  SimTime effective_start = 0;
  /// Next injection time in picoseconds, to avoid drift from ns rounding.
  std::int64_t next_tick_ps = 0;
  std::uint64_t attempted = 0;
  std::uint64_t injected = 0;
  std::uint64_t stalled = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t bytes_injected = 0;
  std::uint64_t bytes_delivered = 0;
  std::vector<std::uint64_t> delivered_bins;
};

struct MessageCounts {
  std::uint64_t pause_frames = 0;
  std::uint64_t resume_frames = 0;
  std::uint64_t checking_piggybacked = 0;
  std::uint64_t checking_packets = 0;
  std::uint64_t check_packets = 0;

  std::uint64_t detector_messages() const { return checking_piggybacked + checking_packets + check_packets; }
};

namespace ev {
struct TxDone {
  PortRef port;
  std::uint64_t tx_epoch;
};
struct DataArrival {
  PortRef port;
  std::uint64_t link_epoch;
  Packet packet;
};
struct Frame {
  enum class Kind : std::uint8_t { kPause, kResume, kChecking, kCheck };
  Kind kind = Kind::kPause;
  std::vector<detect::CheckingMessage> checking;
  std::optional<detect::TemporalCheckPacket> check;
};
struct FrameArrival {
  PortRef port;
  std::uint64_t link_epoch;
  Frame frame;
};
struct FlowTick {
  std::uint32_t flow;
};
struct Failure {
  std::size_t index;
};
struct DetectorTimer {
  NodeId node;
  detect::Timer timer;
};
struct Misbehave {
  std::size_t index;
  bool pause;
};
}  // namespace ev

using EventPayload =
    std::variant<ev::TxDone, ev::DataArrival, ev::FrameArrival, ev::FlowTick, ev::Failure, ev::DetectorTimer, ev::Misbehave>;

struct Event {
  SimTime time = 0;
  std::uint64_t sequence = 0;
  EventPayload payload;
};

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.sequence > b.sequence;
  }
};

/// Deterministic packet-level PFC simulator. Copyable: the oracle probes
/// futures on clones.
class Simulator {
 public:
  Simulator(net::Topology topology, std::vector<FlowSpec> flows, std::vector<FailureSpec> failures,
            std::vector<MisbehaviorSpec> misbehaving, SimConfig config);

  /// Processes events with time <= `until`. Returns early (after the event
  /// that caused it) when the detector emits a report or, if enabled, a
  /// LOOP_DECLARED record. Returns true when it stopped early.
  bool run_until(SimTime until);
  SimTime now() const { return now_; }
  bool idle() const { return events_.empty(); }

  std::vector<detect::DeadlockReport> take_reports();
  std::vector<TraceRecord> take_loop_declarations();
  void set_stop_on_loop_declared(bool on) { stop_on_loop_ = on; }
  void set_stop_on_report(bool on) { stop_on_report_ = on; }

  /// Copy with the detector disabled, tracing off and no early stops: the
  /// shape used for oracle probes.
  Simulator probe_clone() const;
  void freeze_flow(FlowId flow);

  // Out-of-band actions used by recovery and scripted interventions.
  /// Drops packets from the head of an egress queue (the packet on the wire
  /// is left alone) until `until_resumed` stops pausing upstream or the queue
  /// is empty. Returns the number of packets dropped.
  std::uint64_t drain_queue(PortRef egress, std::optional<PortId> until_resumed, const std::string& reason);
  /// The switch port stops honoring PAUSE frames from its peer.
  void mute_pause(PortRef egress);
  void throttle_flow(FlowId flow, double fraction);
  /// Tells the initiator's detector that its confirmed loop was broken.
  void notify_loop_broken(PortRef initiator);
  void add_record(TraceRecord record);

  const net::Topology& topology() const { return topology_; }
  const NodeState& node(NodeId id) const { return nodes_.at(id.value); }
  const std::vector<NodeState>& nodes() const { return nodes_; }
  const std::vector<FlowState>& flows() const { return flows_; }
  const FlowState& flow(FlowId id) const { return flows_.at(id.value); }
  const Trace& trace() const { return *trace_; }
  const MessageCounts& messages() const { return messages_; }
  const SimConfig& config() const { return config_; }
  const std::vector<MisbehaviorSpec>& misbehaving() const { return misbehaving_; }
  std::uint64_t total_drops(const std::string& reason) const;
  std::uint64_t events_processed() const { return events_processed_; }

  /// Throws SimulationError if injected != delivered + queued + in flight + dropped for any flow.
  void check_conservation() const;
  /// Throws SimulationError if a detector mapping bit disagrees with a queue scan.
  void check_traffic_mapping() const;

 private:
  void schedule(SimTime at, EventPayload payload);
  void handle(const ev::TxDone& e);
  void handle(const ev::DataArrival& e);
  void handle(const ev::FrameArrival& e);
  void handle(const ev::FlowTick& e);
  void handle(const ev::Failure& e);
  void handle(const ev::DetectorTimer& e);
  void handle(const ev::Misbehave& e);

  void try_transmit(PortRef egress);
  void enqueue(NodeId node, PortId egress, Packet packet);
  void release(NodeId node, const Packet& packet, PortId egress);
  void send_frame(PortRef from, ev::Frame frame);
  void send_pause(NodeId node, PortId ingress);
  void send_resume(NodeId node, PortId ingress);
  void apply(NodeId node, detect::Effects&& fx);
  void drop(const Packet& packet, NodeId at, const char* reason);
  void trace(SimTime t, const char* kind, NodeId node, std::int32_t port, Json attrs = Json::object());
  SimTime serialization(const net::Link& link, std::uint32_t bytes) const;
  void validate_buffers() const;

  net::Topology topology_;
  SimConfig config_;
  std::vector<NodeState> nodes_;
  std::vector<FlowState> flows_;
  std::vector<FailureSpec> failures_;
  std::vector<MisbehaviorSpec> misbehaving_;
  std::vector<std::uint64_t> link_epoch_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t next_packet_id_ = 0;
  SimTime now_ = 0;
  // Shared so probe clones do not copy the whole history.
  std::shared_ptr<Trace> trace_;
  MessageCounts messages_;
  std::vector<detect::DeadlockReport> reports_;
  std::vector<TraceRecord> loop_declarations_;
  std::map<std::string, std::uint64_t> drops_;
  bool stop_on_loop_ = false;
  bool stop_on_report_ = true;
  bool stop_requested_ = false;
  std::uint64_t events_processed_ = 0;
};

}  // namespace dcfit::sim
