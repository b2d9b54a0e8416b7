#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcfit/oracle.hpp"
#include "dcfit/scenario.hpp"

namespace dcfit::runner {

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool record_trace = true;
  /// Run conservation and traffic-mapping checks at every oracle sample.
  bool check_invariants = false;
};

struct RecoveryAction {
  SimTime time = 0;
  std::size_t report = 0;
  std::optional<PortRef> drained;
  std::uint64_t packets = 0;
  double loss_fraction = 0.0;
  std::string trigger_action;
  std::string error;
};

struct FlowThroughput {
  std::string name;
  bool malicious = false;
  double rate_bps = 0.0;
  SimTime start = 0;
  SimTime stop = kNever;
  /// Delivered rate per bin divided by the configured rate, clamped to [0, 1].
  std::vector<double> normalized;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  SimTime end = 0;
  std::vector<std::string> node_names;
  std::vector<detect::DeadlockReport> reports;
  oracle::Adjudication adjudication;
  std::vector<oracle::OracleSample> oracle_log;
  std::vector<oracle::InterventionLog> interventions;
  std::vector<RecoveryAction> recoveries;
  sim::MessageCounts messages;
  std::map<std::string, std::uint64_t> records_by_kind;
  std::map<std::string, std::uint64_t> drops_by_reason;
  /// Detector memory per switch, from its port count.
  std::vector<std::pair<std::string, std::uint64_t>> state_bytes;
  SimTime throughput_bin = 0;
  std::vector<FlowThroughput> throughput;
  /// Reports confirmed after the first recovery action.
  std::size_t recurrences = 0;
  std::optional<SimTime> first_recovery;
  std::uint64_t trace_hash = 0;
  std::size_t trace_records = 0;
  std::shared_ptr<const Trace> trace;
  std::uint64_t events = 0;
  std::size_t oracle_probes = 0;
  SimTime probe_window = 0;
  double wall_seconds = 0.0;

  bool clean() const { return adjudication.clean(); }
  std::string port_label(PortRef ref) const;
  /// Mean normalized throughput of non-malicious flows over bins that start
  /// at or after `from` and while each flow is active. Nullopt if no such bin.
  std::optional<double> mean_throughput(SimTime from, bool include_malicious = false) const;
};

RunReport run(const scenario::Scenario& scenario, const RunOptions& options = {});

Json to_json(const RunReport& report);
/// One row per (flow, bin).
std::string throughput_csv(const RunReport& report);
/// One row per report.
std::string reports_csv(const RunReport& report);

/// Writes report.json, throughput.csv, oracle.jsonl and, when the trace was
/// recorded and `write_trace` is set, trace.jsonl.
void write_run_dir(const RunReport& report, const std::filesystem::path& dir, bool write_trace);

/// Seeded random scenario: connected graph of 4-12 switches with at most 6
/// ports each, shortest-path routes, random flows and optional link failures.
std::string generate_fuzz_yaml(std::uint64_t seed);

struct FuzzCase {
  std::uint64_t seed = 0;
  std::string name;
  std::size_t switches = 0;
  std::size_t reports = 0;
  std::size_t incidents = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double wall_seconds = 0.0;
  std::string error;
};

struct FuzzSummary {
  std::vector<FuzzCase> cases;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t errors = 0;
  double wall_seconds = 0.0;

  bool clean() const { return false_positives == 0 && false_negatives == 0 && errors == 0; }
};

/// Runs `count` fuzz scenarios with seeds derived from `seed`, in parallel.
FuzzSummary fuzz_campaign(std::size_t count, std::uint64_t seed, unsigned threads = 0);

}  // namespace dcfit::runner
