#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

using namespace dcfit;

namespace {

const char* kBase = R"(name: tiny
topology:
  nodes:
    - {name: S}
    - {name: A, kind: server}
    - {name: B, kind: server}
  links:
    - {a: A, b: S}
    - {a: B, b: S}
routing:
  generator: shortest_path
flows:
  - {name: f, src: A, dst: B, rate_gbps: 5}
sim:
  end_us: 100
)";

std::string error_of(const std::string& text) {
  try {
    scenario::parse_scenario(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("a minimal scenario parses") {
  const auto sc = scenario::parse_scenario(kBase);
  CHECK(sc.name == "tiny");
  CHECK(sc.topology.node_count() == 3);
  REQUIRE(sc.flows.size() == 1);
  CHECK(sc.flows[0].rate_bps == doctest::Approx(5e9));
  CHECK(sc.end == 100 * kMicrosecond);
  CHECK(sc.recovery.break_action == recovery::BreakAction::kNone);
}

TEST_CASE("an empty or missing flow list is valid") {
  auto sc = scenario::parse_scenario(replace(kBase, "flows:\n  - {name: f, src: A, dst: B, rate_gbps: 5}\n", "flows: []\n"));
  CHECK(sc.flows.empty());
  sc = scenario::parse_scenario(replace(kBase, "flows:\n  - {name: f, src: A, dst: B, rate_gbps: 5}\n", ""));
  CHECK(sc.flows.empty());
  const auto r = runner::run(sc);
  CHECK(r.trace_records == 0);
  CHECK(r.clean());
}

TEST_CASE("errors name the field and the line") {
  SUBCASE("bad value") {
    const auto e = error_of(replace(kBase, "rate_gbps: 5", "rate_gbps: -5"));
    CHECK(e.find("t.yaml:13") != std::string::npos);
    CHECK(e.find("flows[0].rate_gbps") != std::string::npos);
  }
  SUBCASE("unknown field") {
    const auto e = error_of(replace(kBase, "end_us: 100", "end_us: 100\n  speed: 3"));
    CHECK(e.find("t.yaml:16") != std::string::npos);
    CHECK(e.find("sim.speed") != std::string::npos);
    CHECK(e.find("unknown field") != std::string::npos);
  }
  SUBCASE("dangling node reference") {
    const auto e = error_of(replace(kBase, "dst: B", "dst: Q"));
    CHECK(e.find("flows[0].dst") != std::string::npos);
    CHECK(e.find("unknown node 'Q'") != std::string::npos);
  }
  SUBCASE("flow endpoint that is a switch") {
    const auto e = error_of(replace(kBase, "dst: B", "dst: S"));
    CHECK(e.find("flows[0].dst") != std::string::npos);
  }
  SUBCASE("failure of a link that does not exist") {
    const auto e = error_of(std::string(kBase) + "failures:\n  - {at_us: 5, link: [A, B]}\n");
    CHECK(e.find("failures[0].link") != std::string::npos);
    CHECK(e.find("t.yaml:17") != std::string::npos);
  }
  SUBCASE("pause longer than its period") {
    const auto e = error_of(std::string(kBase) +
                            "misbehaving_servers:\n  - {server: B, period_us: 10, pause_us: 20}\n");
    CHECK(e.find("misbehaving_servers[0].pause_us") != std::string::npos);
  }
  SUBCASE("bad recovery action") {
    const auto e = error_of(std::string(kBase) + "recovery: {break: explode}\n");
    CHECK(e.find("recovery.break") != std::string::npos);
  }
  SUBCASE("missing required field") {
    const auto e = error_of(replace(kBase, "name: tiny\n", ""));
    CHECK(e.find("name") != std::string::npos);
    CHECK(e.find("required field missing") != std::string::npos);
  }
  SUBCASE("malformed YAML") {
    const auto e = error_of("name: [unclosed\n");
    CHECK(e.find("t.yaml:") == 0);
  }
  SUBCASE("intervention needs exactly one timing") {
    const auto e = error_of(std::string(kBase) + "interventions:\n  - {drain: [S, B]}\n");
    CHECK(e.find("interventions[0]") != std::string::npos);
  }
  SUBCASE("thresholds out of order") {
    const auto e = error_of(std::string(kBase) + "pfc: {xon_bytes: 90000}\n");
    CHECK(e.find("pfc.xon_bytes") != std::string::npos);
  }
}

TEST_CASE("optional sections parse") {
  const auto sc = scenario::parse_scenario(std::string(kBase) + R"(failures:
  - {at_us: 5, link: [B, S], auto_detour: false}
misbehaving_servers:
  - {server: B, start_us: 10, period_us: 50, pause_us: 20}
recovery: {break: drain_one_queue, trigger: rate_limit_heavy_hitter, rate_limit_fraction: 0.3, reaction_delay_us: 7}
detector: {capacity: 2, temporal_check_delay_us: 40, hold_bytes: 0}
pfc: {xoff_bytes: 60000, xon_bytes: 30000}
interventions:
  - {after: LOOP_DECLARED, delay_us: 3, drain: [S, B]}
  - {at_us: 50, drain: [S, A]}
)");
  REQUIRE(sc.failures.size() == 1);
  CHECK(sc.failures[0].at == 5 * kMicrosecond);
  REQUIRE(sc.misbehaving.size() == 1);
  CHECK(sc.misbehaving[0].pause_duration == 20 * kMicrosecond);
  CHECK(sc.recovery.break_action == recovery::BreakAction::kDrainOneQueue);
  CHECK(sc.recovery.trigger_action == recovery::TriggerAction::kRateLimitHeavyHitter);
  CHECK(sc.recovery.rate_limit_fraction == doctest::Approx(0.3));
  CHECK(sc.recovery.reaction_delay == 7 * kMicrosecond);
  CHECK(sc.config.detector.capacity == 2);
  CHECK(sc.config.detector.temporal_check_delay == 40 * kMicrosecond);
  CHECK(sc.config.detector.hold_bytes == 0u);
  CHECK(sc.config.pfc.xoff_bytes == 60000);
  REQUIRE(sc.interventions.size() == 2);
  CHECK(sc.interventions[0].after_loop_declared);
  CHECK(sc.interventions[0].delay == 3 * kMicrosecond);
  CHECK(sc.interventions[1].at == 50 * kMicrosecond);
  CHECK(sc.interventions[1].drain.node == sc.topology.require("S"));
}

TEST_CASE("built-in scenarios") {
  const auto names = scenario::builtin_names();
  for (const char* required : {"fig3_on_loop", "fig4_out_of_loop", "fig5_no_deadlock", "fattree_k4_two_failures",
                               "fig6_misbehaving_server_baseline", "fig6_misbehaving_server_mitigated",
                               "congestion_free"}) {
    CHECK(std::find(names.begin(), names.end(), required) != names.end());
  }
  for (const auto& n : names) {
    CAPTURE(n);
    const auto sc = scenario::builtin(n);
    CHECK(sc.name == n);
    CHECK_FALSE(sc.description.empty());
    CHECK(sc.topology.unreachable_server_pairs().empty());
    CHECK(scenario::load_scenario(n).name == n);
  }
  CHECK_THROWS_AS(scenario::builtin("nope"), ConfigError);
  CHECK_THROWS_AS(scenario::load_scenario("/no/such/file.yaml"), ConfigError);
}

TEST_CASE("scenario files load from disk") {
  const auto sc = scenario::load_scenario(std::string(DCFIT_TEST_DATA) + "/marginal_cbd.yaml");
  CHECK(sc.name == "marginal_cbd");
  CHECK_FALSE(sc.flows.empty());
}
