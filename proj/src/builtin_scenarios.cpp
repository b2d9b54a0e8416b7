#include <algorithm>
#include <map>

#include "dcfit/scenario.hpp"

namespace dcfit::scenario {

namespace {

const std::map<std::string_view, std::string_view>& table() {
  static const std::map<std::string_view, std::string_view> scenarios = {
      {"congestion_free", R"yaml(
name: congestion_free
description: >
  Leaf-spine fabric with light, non-overlapping traffic. No port ever
  reaches XOFF, so no detector message may be sent.
topology:
  generator: clos
  spines: 2
  leaves: 4
  servers_per_leaf: 2
flows:
  - {name: a, src: H0_0, dst: H1_0, rate_gbps: 3, start_us: 0}
  - {name: b, src: H1_1, dst: H2_1, rate_gbps: 3, start_us: 0}
  - {name: c, src: H2_0, dst: H3_0, rate_gbps: 3, start_us: 0}
  - {name: d, src: H3_1, dst: H0_1, rate_gbps: 3, start_us: 0}
sim:
  end_us: 2000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fattree_k4_two_failures", R"yaml(
name: fattree_k4_two_failures
description: >
  k=4 fat-tree with links a0_0-e0_0 and e1_0-a1_1 failed at start. Automatic
  detours route traffic around the failures and close an eight-port buffer
  loop across pods 0 and 1. f1 and f3 overload the aggregation uplink at
  a0_1, which sits on the loop. b1-b4 stay inside pods 2 and 3 and never
  touch the loop.
topology:
  generator: fat_tree
  k: 4
failures:
  - {at_us: 0, link: [a0_0, e0_0], auto_detour: true}
  - {at_us: 0, link: [e1_0, a1_1], auto_detour: true}
flows:
  - {name: f1, src: h1_0_0, dst: h0_0_0, rate_gbps: 8, start_us: 10}
  - {name: f2, src: h0_1_0, dst: h2_0_1, rate_gbps: 4, start_us: 10}
  - {name: f3, src: h0_0_0, dst: h1_0_0, rate_gbps: 8, start_us: 10}
  - {name: f4, src: h1_1_0, dst: h2_0_0, rate_gbps: 4, start_us: 10}
  - {name: f5, src: h0_1_1, dst: h3_0_1, rate_gbps: 4, start_us: 10}
  - {name: b1, src: h3_1_0, dst: h3_1_1, rate_gbps: 9, start_us: 10}
  - {name: b2, src: h3_1_1, dst: h3_1_0, rate_gbps: 9, start_us: 10}
  - {name: b3, src: h2_1_0, dst: h2_1_1, rate_gbps: 9, start_us: 10}
  - {name: b4, src: h2_1_1, dst: h2_1_0, rate_gbps: 9, start_us: 10}
sim:
  end_us: 3000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig3_on_loop", R"yaml(
name: fig3_on_loop
description: >
  Leaf-spine fabric with two spine downlinks failed. Detours create the
  buffer loop L0 -> S0 -> L1 -> S1 -> L0; the oversubscribed L0 uplink toward
  S0 is on the loop, so the congestion root sits on the loop.
topology:
  generator: clos
  spines: 2
  leaves: 4
  servers_per_leaf: 2
failures:
  - at_us: 0
    link: [S0, L2]
    auto_detour: false
    overrides:
      - {node: S0, destinations: [H2_0, H2_1], via: L1}
      - {node: L1, destinations: [H2_0, H2_1], via: S1}
  - at_us: 0
    link: [S1, L3]
    auto_detour: false
    overrides:
      - {node: S1, destinations: [H3_0, H3_1], via: L0}
      - {node: L0, destinations: [H3_0, H3_1], via: S0}
flows:
  - {name: fa, src: H0_0, dst: H2_0, rate_gbps: 8, start_us: 10}
  - {name: fb, src: H1_0, dst: H3_1, rate_gbps: 8, start_us: 10}
  - {name: fc, src: H0_1, dst: H3_0, rate_gbps: 4, start_us: 10}
sim:
  end_us: 3000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig3_transient_resume", R"yaml(
name: fig3_transient_resume
description: >
  Same fabric and traffic as fig3_on_loop. Thirty microseconds after the
  loop is declared, the L1 -> S1 queue is flushed. S0 is briefly resumed and
  paused again, so the temporal check finds a resume tag and must drop.
  Without the intervention block the run reports the deadlock once.
topology:
  generator: clos
  spines: 2
  leaves: 4
  servers_per_leaf: 2
failures:
  - at_us: 0
    link: [S0, L2]
    auto_detour: false
    overrides:
      - {node: S0, destinations: [H2_0, H2_1], via: L1}
      - {node: L1, destinations: [H2_0, H2_1], via: S1}
  - at_us: 0
    link: [S1, L3]
    auto_detour: false
    overrides:
      - {node: S1, destinations: [H3_0, H3_1], via: L0}
      - {node: L0, destinations: [H3_0, H3_1], via: S0}
flows:
  - {name: fa, src: H0_0, dst: H2_0, rate_gbps: 8, start_us: 10}
  - {name: fb, src: H1_0, dst: H3_1, rate_gbps: 8, start_us: 10}
  - {name: fc, src: H0_1, dst: H3_0, rate_gbps: 4, start_us: 10}
interventions:
  - {after: LOOP_DECLARED, delay_us: 30, drain: [L1, S1]}
sim:
  end_us: 900
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig4_out_of_loop", R"yaml(
name: fig4_out_of_loop
description: >
  Four-switch routing loop S2 -> S4 -> S1 -> S5 -> S2 carrying four loop
  flows. The congestion root is off the loop: f5 from H11 behind S6 and m
  from the loop both head to H10, whose 2 Gbps link makes S10 pause S6
  first. Pauses spread through S2 into the loop, and the report must name
  the S10 port facing S6.
topology:
  link: {bandwidth_gbps: 10, delay_us: 1}
  nodes:
    - {name: S1}
    - {name: S2}
    - {name: S4}
    - {name: S5}
    - {name: S6}
    - {name: S10}
    - {name: H1, kind: server}
    - {name: H2, kind: server}
    - {name: H4, kind: server}
    - {name: H5, kind: server}
    - {name: H10, kind: server}
    - {name: H11, kind: server}
  links:
    - {a: S2, b: S4}
    - {a: S4, b: S1}
    - {a: S1, b: S5}
    - {a: S5, b: S2}
    - {a: S2, b: S6}
    - {a: S6, b: S10}
    - {a: H1, b: S1}
    - {a: H2, b: S2}
    - {a: H4, b: S4}
    - {a: H5, b: S5}
    - {a: H11, b: S6}
    - {a: H10, b: S10, bandwidth_gbps: 2}
routing:
  generator: shortest_path
  routes:
    - {node: S2, destination: H1, via: S4}
    - {node: S4, destination: H1, via: S1}
    - {node: S4, destination: H5, via: S1}
    - {node: S1, destination: H5, via: S5}
    - {node: S1, destination: H2, via: S5}
    - {node: S5, destination: H2, via: S2}
    - {node: S5, destination: H4, via: S2}
    - {node: S2, destination: H4, via: S4}
flows:
  - {name: l1, src: H2, dst: H1, rate_gbps: 5, start_us: 10}
  - {name: l2, src: H4, dst: H5, rate_gbps: 5, start_us: 10}
  - {name: l3, src: H1, dst: H2, rate_gbps: 5, start_us: 10}
  - {name: l4, src: H5, dst: H4, rate_gbps: 5, start_us: 10}
  - {name: m, src: H5, dst: H10, rate_gbps: 4, start_us: 10}
  - {name: f5, src: H11, dst: H10, rate_gbps: 10, start_us: 10, malicious: true}
sim:
  end_us: 3000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig5_no_deadlock", R"yaml(
name: fig5_no_deadlock
description: >
  Two paths from junction S7 (via S5 and via S6) rejoin at S3 before the
  congested switch S1. The checking message from the trigger at S1 reaches
  S7 on both of its paused egresses, which marks S7 as a middle switch and
  starts detection there. There is no loop, so nothing may be reported.
topology:
  link: {bandwidth_gbps: 10, delay_us: 1}
  nodes:
    - {name: S7}
    - {name: S5}
    - {name: S6}
    - {name: S3}
    - {name: S1}
    - {name: H1, kind: server}
    - {name: H2, kind: server}
    - {name: D1, kind: server}
    - {name: D2, kind: server}
  links:
    - {a: S7, b: S5}
    - {a: S7, b: S6}
    - {a: S5, b: S3}
    - {a: S6, b: S3}
    - {a: S3, b: S1}
    - {a: H1, b: S7}
    - {a: H2, b: S7}
    - {a: S1, b: D1, bandwidth_gbps: 2}
    - {a: S1, b: D2, bandwidth_gbps: 2}
routing:
  generator: shortest_path
  routes:
    - {node: S7, destination: D1, via: S5}
    - {node: S7, destination: D2, via: S6}
flows:
  - {name: x, src: H1, dst: D1, rate_gbps: 8, start_us: 10}
  - {name: y, src: H2, dst: D2, rate_gbps: 8, start_us: 10}
sim:
  end_us: 2000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig6_misbehaving_server_baseline", R"yaml(
name: fig6_misbehaving_server_baseline
description: >
  Ring R0 -> R1 -> R2 -> R3 -> R0 with two-hop flows f0..f3 under capacity.
  Server Z behind ToR T pauses for 900 us of every 1000 us, which backs the
  z flow up into the ring and closes a buffer loop. Recovery only drains
  one loop queue, so the loop comes back with the next pause.
topology:
  link: {bandwidth_gbps: 10, delay_us: 1}
  nodes:
    - {name: R0}
    - {name: R1}
    - {name: R2}
    - {name: R3}
    - {name: T}
    - {name: H0, kind: server}
    - {name: H1, kind: server}
    - {name: H2, kind: server}
    - {name: H3, kind: server}
    - {name: Z, kind: server}
  links:
    - {a: R0, b: R1}
    - {a: R1, b: R2}
    - {a: R2, b: R3}
    - {a: R3, b: R0}
    - {a: R0, b: T}
    - {a: T, b: Z}
    - {a: H0, b: R0}
    - {a: H1, b: R1}
    - {a: H2, b: R2}
    - {a: H3, b: R3}
routing:
  generator: shortest_path
  routes:
    - {node: R0, destination: H2, via: R1}
    - {node: R1, destination: H3, via: R2}
    - {node: R2, destination: H0, via: R3}
    - {node: R3, destination: H1, via: R0}
    - {node: R2, destination: Z, via: R3}
flows:
  - {name: f0, src: H0, dst: H2, rate_gbps: 2, start_us: 10}
  - {name: f1, src: H1, dst: H3, rate_gbps: 2, start_us: 10}
  - {name: f2, src: H2, dst: H0, rate_gbps: 2, start_us: 10}
  - {name: f3, src: H3, dst: H1, rate_gbps: 2, start_us: 10}
  - {name: z, src: H2, dst: Z, rate_gbps: 5, start_us: 10}
misbehaving_servers:
  - {server: Z, start_us: 200, period_us: 1000, pause_us: 900}
recovery:
  break: drain_one_queue
  trigger: none
sim:
  end_us: 10000
  seed: 1
  start_jitter_us: 5
)yaml"},
      {"fig6_misbehaving_server_mitigated", R"yaml(
name: fig6_misbehaving_server_mitigated
description: >
  Same ring and traffic as fig6_misbehaving_server_baseline. Recovery drains
  one loop queue and makes T ignore pause frames from Z, so the loop does
  not come back and the ring flows return to their configured rates.
topology:
  link: {bandwidth_gbps: 10, delay_us: 1}
  nodes:
    - {name: R0}
    - {name: R1}
    - {name: R2}
    - {name: R3}
    - {name: T}
    - {name: H0, kind: server}
    - {name: H1, kind: server}
    - {name: H2, kind: server}
    - {name: H3, kind: server}
    - {name: Z, kind: server}
  links:
    - {a: R0, b: R1}
    - {a: R1, b: R2}
    - {a: R2, b: R3}
    - {a: R3, b: R0}
    - {a: R0, b: T}
    - {a: T, b: Z}
    - {a: H0, b: R0}
    - {a: H1, b: R1}
    - {a: H2, b: R2}
    - {a: H3, b: R3}
routing:
  generator: shortest_path
  routes:
    - {node: R0, destination: H2, via: R1}
    - {node: R1, destination: H3, via: R2}
    - {node: R2, destination: H0, via: R3}
    - {node: R3, destination: H1, via: R0}
    - {node: R2, destination: Z, via: R3}
flows:
  - {name: f0, src: H0, dst: H2, rate_gbps: 2, start_us: 10}
  - {name: f1, src: H1, dst: H3, rate_gbps: 2, start_us: 10}
  - {name: f2, src: H2, dst: H0, rate_gbps: 2, start_us: 10}
  - {name: f3, src: H3, dst: H1, rate_gbps: 2, start_us: 10}
  - {name: z, src: H2, dst: Z, rate_gbps: 5, start_us: 10}
misbehaving_servers:
  - {server: Z, start_us: 200, period_us: 1000, pause_us: 900}
recovery:
  break: drain_one_queue
  trigger: mute_server_pause
sim:
  end_us: 10000
  seed: 1
  start_jitter_us: 5
)yaml"},
  };
  return scenarios;
}

}  // namespace

std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : table()) out.emplace_back(name);
  return out;
}

std::optional<std::string_view> builtin_text(std::string_view name) {
  auto it = table().find(name);
  if (it == table().end()) return std::nullopt;
  std::string_view text = it->second;
  // Raw strings start with a newline for readability.
  if (!text.empty() && text.front() == '\n') text.remove_prefix(1);
  return text;
}

}  // namespace dcfit::scenario
