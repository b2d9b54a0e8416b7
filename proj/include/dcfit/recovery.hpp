#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "dcfit/dcfit.hpp"
#include "dcfit/pfc_sim.hpp"

namespace dcfit::recovery {

enum class BreakAction : std::uint8_t { kNone, kDrainOneQueue };
enum class TriggerAction : std::uint8_t { kNone, kMuteServerPause, kRateLimitHeavyHitter };

struct RecoveryPolicy {
  BreakAction break_action = BreakAction::kNone;
  TriggerAction trigger_action = TriggerAction::kNone;
  double rate_limit_fraction = 0.5;
  SimTime reaction_delay = 10 * kMicrosecond;

  bool any() const { return break_action != BreakAction::kNone || trigger_action != TriggerAction::kNone; }
};

/// The requested trigger action does not apply to this report's trigger.
class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BreakResult {
  PortRef drained;
  std::uint64_t packets = 0;
  /// Dropped packets over packets that were queued at the port.
  double loss_fraction = 0.0;
};

/// Drains the first loop egress until the loop ingress it feeds stops pausing.
BreakResult break_deadlock(sim::Simulator& state, const detect::DeadlockReport& report);

/// Largest cumulative byte count among flows that entered at `ingress`;
/// ties go to the lowest flow id.
std::optional<FlowId> heavy_hitter(const sim::Simulator& state, PortRef ingress);

/// Throttles the heavy hitter entering at a switch trigger port. Returns the flow.
FlowId rate_limit_heavy_hitter(sim::Simulator& state, PortRef trigger, double fraction);

/// Applies the trigger action of `policy`. Returns a short description for the trace.
std::string mitigate_trigger(sim::Simulator& state, const detect::DeadlockReport& report,
                             const RecoveryPolicy& policy);

const char* to_string(BreakAction action);
const char* to_string(TriggerAction action);

}  // namespace dcfit::recovery
