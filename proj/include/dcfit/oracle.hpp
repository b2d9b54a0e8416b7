#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcfit/common.hpp"
#include "dcfit/dcfit.hpp"
#include "dcfit/pfc_sim.hpp"

namespace dcfit::oracle {

/// Paused egress ports in wait-for order: each port waits on the next one.
using Cycle = std::vector<PortRef>;

/// Nodes are paused egress ports. (A,p) -> (B,q) iff p's link lands on B at
/// ingress b, b is pausing upstream, q is paused, and q's queue holds a packet
/// that arrived through b. Built from queue contents only.
struct WaitForGraph {
  std::vector<PortRef> nodes;
  std::vector<std::vector<std::size_t>> edges;

  std::optional<std::size_t> index_of(PortRef port) const;
  bool has_edge(PortRef from, PortRef to) const;
};

WaitForGraph build_wait_for_graph(const sim::Simulator& state);

/// All elementary cycles (each rotated to start at its smallest port),
/// stopping after `limit` cycles.
std::vector<Cycle> snapshot_cbd(const sim::Simulator& state, std::size_t limit = 256);

/// True iff, on a clone with injection frozen for every flow that has packets
/// queued on the cycle, no cycle port starts a departure or receives RESUME
/// during `probe_window`.
bool confirm_deadlock(const sim::Simulator& state, const Cycle& cycle, SimTime probe_window);

/// max(10 x the longest link round trip, time to drain one full switch buffer
/// through the slowest link).
SimTime default_probe_window(const net::Topology& topology, const sim::PfcConfig& pfc);

/// Rotates a detector loop (check traversal order) into wait-for order.
Cycle cycle_from_report(const detect::DeadlockReport& report);
bool is_cycle(const WaitForGraph& graph, const Cycle& cycle);
/// Latest pause onset among the cycle's ports.
SimTime formation_time(const sim::Simulator& state, const Cycle& cycle);

struct OracleSample {
  SimTime time = 0;
  /// "periodic" or "report".
  std::string context;
  std::optional<std::size_t> report_index;
  std::vector<Cycle> cycles;
  std::vector<bool> confirmed;
  std::vector<SimTime> formed;
};

/// Caches positive verdicts for cycles whose ports have not re-paused since.
class Oracle {
 public:
  explicit Oracle(SimTime probe_window) : window_(probe_window) {}

  OracleSample sample(const sim::Simulator& state);
  OracleSample check_report(const sim::Simulator& state, const detect::DeadlockReport& report, std::size_t index);
  /// Drop cached verdicts; call after any out-of-band state change.
  void invalidate() { confirmed_.clear(); }
  SimTime probe_window() const { return window_; }
  std::size_t probes_run() const { return probes_; }

 private:
  bool confirm(const sim::Simulator& state, const Cycle& cycle);

  SimTime window_;
  std::map<std::vector<std::pair<PortRef, SimTime>>, bool> confirmed_;
  std::size_t probes_ = 0;
};

/// Out-of-band change to queues: scripted drains or recovery actions.
struct InterventionLog {
  SimTime time = 0;
  std::vector<PortRef> ports;
  bool scripted = false;
};

struct Incident {
  std::vector<PortRef> ports;
  SimTime formed = 0;
  SimTime first_seen = 0;
  SimTime last_seen = 0;
  std::optional<SimTime> closed;
  std::string close_reason;
  std::vector<std::size_t> reports;
  /// Still open at the end but too young to demand a report.
  bool pending = false;
  /// Ended by a scripted intervention before any report.
  bool preempted = false;
  bool false_negative = false;
};

struct Adjudication {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::vector<bool> report_true;
  /// Per report; negative when the report is a false positive.
  std::vector<SimTime> latencies;
  std::vector<Incident> incidents;

  bool clean() const { return false_positives == 0 && false_negatives == 0; }
};

/// Matches reports against oracle-confirmed incidents. `grace` is how long an
/// incident may exist at the end of the run without being reported.
Adjudication adjudicate(const std::vector<detect::DeadlockReport>& reports, const std::vector<OracleSample>& log,
                        const std::vector<InterventionLog>& interventions, SimTime end, SimTime grace);

}  // namespace dcfit::oracle
