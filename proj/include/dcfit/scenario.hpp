#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcfit/net_model.hpp"
#include "dcfit/pfc_sim.hpp"
#include "dcfit/recovery.hpp"

namespace dcfit::scenario {

/// Out-of-band queue drain scripted by the scenario, either at a fixed time or
/// a fixed delay after the first LOOP_DECLARED record.
struct Intervention {
  std::optional<SimTime> at;
  bool after_loop_declared = false;
  SimTime delay = 0;
  /// Egress port to drain completely.
  PortRef drain;
};

struct Scenario {
  std::string name;
  std::string description;
  net::Topology topology;
  std::vector<sim::FlowSpec> flows;
  std::vector<sim::FailureSpec> failures;
  std::vector<sim::MisbehaviorSpec> misbehaving;
  sim::SimConfig config;
  recovery::RecoveryPolicy recovery;
  std::vector<Intervention> interventions;
  SimTime end = 5 * kMillisecond;
  SimTime oracle_interval = 20 * kMicrosecond;
  /// Unset means oracle::default_probe_window.
  std::optional<SimTime> probe_window;
  /// Incidents younger than this at the end of the run are not required to be reported.
  std::optional<SimTime> report_grace;
};

/// Parses YAML scenario text. Errors name the offending field and line.
Scenario parse_scenario(std::string_view text, const std::string& origin = "<string>");

/// Loads a scenario file, or a built-in scenario when `path_or_name` names one
/// and no such file exists.
Scenario load_scenario(const std::string& path_or_name);

std::vector<std::string> builtin_names();
std::optional<std::string_view> builtin_text(std::string_view name);
Scenario builtin(std::string_view name);

}  // namespace dcfit::scenario
