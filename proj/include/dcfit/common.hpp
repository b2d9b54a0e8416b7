#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace dcfit {

/// Simulated time in nanoseconds.
using SimTime = std::int64_t;

constexpr SimTime kNanosecond = 1;
constexpr SimTime kMicrosecond = 1000;
constexpr SimTime kMillisecond = 1000 * kMicrosecond;
constexpr SimTime kNever = std::numeric_limits<SimTime>::max();

constexpr SimTime from_us(double us) { return static_cast<SimTime>(us * 1000.0 + 0.5); }
constexpr double to_us(SimTime t) { return static_cast<double>(t) / 1000.0; }

enum class NodeKind : std::uint8_t { kSwitch, kServer };

struct NodeId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

struct PortId {
  std::uint16_t value = 0;
  friend constexpr auto operator<=>(PortId, PortId) = default;
};

struct LinkId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(LinkId, LinkId) = default;
};

struct FlowId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(FlowId, FlowId) = default;
};

/// A specific port on a specific node.
struct PortRef {
  NodeId node;
  PortId port;
  friend constexpr auto operator<=>(const PortRef&, const PortRef&) = default;
};

/// Invalid topology, routing table or scenario file contents.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scenario asked for something impossible at run time (e.g. failing a dead link).
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal invariant of the event loop was violated. Always a simulator bug.
class SimulationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dcfit

template <>
struct std::hash<dcfit::PortRef> {
  std::size_t operator()(const dcfit::PortRef& ref) const noexcept {
    return (static_cast<std::size_t>(ref.node.value) << 16) ^ ref.port.value;
  }
};
