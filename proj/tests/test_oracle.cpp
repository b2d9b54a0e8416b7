#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "helpers.hpp"

using namespace dcfit;
using namespace testkit;

namespace {

/// Wait-for edges rebuilt straight from queue state: (A,p) waits on (B,q)
/// when p feeds B through an ingress that is pausing upstream and q, paused,
/// holds a packet that came in through that ingress.
std::map<PortRef, std::set<PortRef>> reference_graph(const sim::Simulator& s) {
  const auto& t = s.topology();
  std::map<PortRef, std::set<PortRef>> g;
  auto paused = [&](PortRef r) {
    const auto& q = s.node(r.node).egress[r.port.value];
    return q.paused && q.honor_pause;
  };
  for (std::uint32_t n = 0; n < t.node_count(); ++n) {
    for (std::uint16_t p = 0; p < t.port_count(NodeId{n}); ++p) {
      const PortRef a{NodeId{n}, PortId{p}};
      if (!paused(a)) continue;
      g[a];
      const auto far = t.peer(a);
      if (t.is_server(far.node)) continue;
      if (!s.node(far.node).ingress[far.port.value].pausing_upstream) continue;
      for (std::uint16_t q = 0; q < t.port_count(far.node); ++q) {
        const PortRef b{far.node, PortId{q}};
        if (!paused(b)) continue;
        const auto& eq = s.node(b.node).egress[q];
        bool holds = eq.in_service && eq.in_service->ingress == far.port;
        for (const auto& pkt : eq.fifo) holds = holds || pkt.ingress == far.port;
        if (holds) g[a].insert(b);
      }
    }
  }
  return g;
}

/// Every elementary cycle by exhaustive path search, rotated to its smallest port.
std::set<std::vector<PortRef>> brute_force_cycles(const std::map<PortRef, std::set<PortRef>>& g) {
  std::set<std::vector<PortRef>> out;
  std::vector<PortRef> path;
  std::function<void(PortRef)> dfs = [&](PortRef v) {
    for (const auto& w : g.at(v)) {
      if (w == path.front()) {
        auto c = path;
        std::rotate(c.begin(), std::min_element(c.begin(), c.end()), c.end());
        out.insert(c);
      } else if (std::find(path.begin(), path.end(), w) == path.end()) {
        path.push_back(w);
        dfs(w);
        path.pop_back();
      }
    }
  };
  for (const auto& [v, _] : g) {
    path = {v};
    dfs(v);
  }
  return out;
}

std::set<std::vector<PortRef>> as_set(const std::vector<oracle::Cycle>& cycles) {
  return {cycles.begin(), cycles.end()};
}

struct Deadlocked {
  sim::Simulator sim;
  detect::DeadlockReport report;
};

Deadlocked fig3_at_report() {
  const auto sc = scenario::builtin("fig3_on_loop");
  auto s = make_sim(sc);
  detect::DeadlockReport rep;
  REQUIRE(run_to_first_report(s, sc.end, rep));
  return {std::move(s), rep};
}

std::uint64_t departures(const sim::Simulator& s, PortRef p) { return s.node(p.node).egress[p.port.value].departures; }

}  // namespace

TEST_CASE("cycle enumeration matches exhaustive search on a deadlocked fabric") {
  auto [s, rep] = fig3_at_report();
  const auto ref = brute_force_cycles(reference_graph(s));
  const auto got = oracle::snapshot_cbd(s);
  CHECK(as_set(got) == ref);
  CHECK(got.size() == ref.size());
  REQUIRE(ref.size() == 1);
  CHECK(ref.begin()->size() == 4);
  CHECK(*ref.begin() == oracle::cycle_from_report(rep));
}

TEST_CASE("cycle enumeration matches exhaustive search across generated scenarios") {
  std::size_t with_cycles = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    CAPTURE(seed);
    auto sc = scenario::parse_scenario(runner::generate_fuzz_yaml(seed));
    auto s = make_sim(sc);
    s.set_stop_on_report(false);
    for (SimTime t = 100 * kMicrosecond; t <= sc.end; t += 300 * kMicrosecond) {
      s.run_until(t);
      const auto ref = brute_force_cycles(reference_graph(s));
      const auto got = oracle::snapshot_cbd(s);
      CHECK(as_set(got) == ref);
      CHECK(got.size() == ref.size());
      if (!ref.empty()) ++with_cycles;
    }
  }
  CHECK(with_cycles > 0);
}

TEST_CASE("no paused ports means no cycles") {
  const auto sc = scenario::builtin("congestion_free");
  auto s = make_sim(sc);
  s.run_until(sc.end);
  CHECK(oracle::build_wait_for_graph(s).nodes.empty());
  CHECK(oracle::snapshot_cbd(s).empty());
}

TEST_CASE("paused ports around a junction without a loop form no cycle") {
  const auto sc = scenario::builtin("fig5_no_deadlock");
  auto s = make_sim(sc);
  s.set_stop_on_report(false);
  bool saw_paused = false;
  for (SimTime t = 100 * kMicrosecond; t <= sc.end; t += 100 * kMicrosecond) {
    s.run_until(t);
    saw_paused = saw_paused || !oracle::build_wait_for_graph(s).nodes.empty();
    CHECK(oracle::snapshot_cbd(s).empty());
  }
  CHECK(saw_paused);
}

TEST_CASE("a genuine deadlock is confirmed for short and long probe windows") {
  auto [s, rep] = fig3_at_report();
  const auto cycle = oracle::cycle_from_report(rep);
  CHECK(oracle::is_cycle(oracle::build_wait_for_graph(s), cycle));
  for (SimTime w : {kMicrosecond, 10 * kMicrosecond, 100 * kMicrosecond})
    CHECK(oracle::confirm_deadlock(s, cycle, w));
  CHECK(oracle::confirm_deadlock(s, cycle, oracle::default_probe_window(s.topology(), s.config().pfc)));
  CHECK(oracle::formation_time(s, cycle) <= rep.t_loop_detected);
}

TEST_CASE("loop ports send nothing once the deadlock has formed") {
  auto [s, rep] = fig3_at_report();
  std::vector<std::uint64_t> before;
  for (const auto& p : rep.loop_ports) before.push_back(departures(s, p));
  s.set_stop_on_report(false);
  s.run_until(s.now() + 1000 * kMicrosecond);
  for (std::size_t i = 0; i < rep.loop_ports.size(); ++i) CHECK(departures(s, rep.loop_ports[i]) == before[i]);
  CHECK(oracle::confirm_deadlock(s, oracle::cycle_from_report(rep), 100 * kMicrosecond));
}

TEST_CASE("the probe does not disturb the state it inspects") {
  auto [s, rep] = fig3_at_report();
  const auto now = s.now();
  const auto events = s.events_processed();
  const auto records = s.trace().size();
  oracle::confirm_deadlock(s, oracle::cycle_from_report(rep), 100 * kMicrosecond);
  CHECK(s.now() == now);
  CHECK(s.events_processed() == events);
  CHECK(s.trace().size() == records);
}

TEST_CASE("a drained loop is no longer a deadlock") {
  auto [s, rep] = fig3_at_report();
  recovery::break_deadlock(s, rep);
  const auto cycle = oracle::cycle_from_report(rep);
  CHECK_FALSE(oracle::is_cycle(oracle::build_wait_for_graph(s), cycle));
  CHECK_FALSE(oracle::confirm_deadlock(s, cycle, 100 * kMicrosecond));
}

TEST_CASE("a cycle held by a pausing server is not a deadlock") {
  const auto sc = scenario::load_scenario(std::string(DCFIT_TEST_DATA) + "/marginal_cbd.yaml");
  auto s = make_sim(sc);
  s.set_stop_on_report(false);
  s.run_until(600 * kMicrosecond);
  const auto cycles = oracle::snapshot_cbd(s);
  REQUIRE_FALSE(cycles.empty());
  const auto window = oracle::default_probe_window(s.topology(), s.config().pfc);
  for (const auto& c : cycles) {
    CHECK_FALSE(oracle::confirm_deadlock(s, c, window));
    // The unmodified future agrees: some cycle port moves again.
    auto future = s;
    std::vector<std::uint64_t> before;
    for (const auto& p : c) before.push_back(departures(future, p));
    future.run_until(future.now() + 2 * kMillisecond);
    bool moved = false;
    for (std::size_t i = 0; i < c.size(); ++i) moved = moved || departures(future, c[i]) != before[i];
    CHECK(moved);
  }
}

TEST_CASE("the oracle is independent of the detector") {
  auto sc = scenario::builtin("fig3_on_loop");
  sc.config.detector.enabled = false;
  const auto r = runner::run(sc);
  CHECK(r.reports.empty());
  CHECK(r.messages.detector_messages() == 0);
  CHECK(r.adjudication.incidents.size() == 1);
  CHECK(r.adjudication.false_negatives == 1);
}

TEST_CASE("default probe window") {
  const auto t = net::build_clos_scenario();
  sim::PfcConfig pfc;
  // Ten round trips of 1 us links against one full buffer through a 10 Gbps link.
  const SimTime rtt10 = 10 * 2 * kMicrosecond;
  const auto drain = static_cast<SimTime>(pfc.buffer_bytes * 8 / 10);
  CHECK(oracle::default_probe_window(t, pfc) == std::max(rtt10, drain));
}

namespace {

oracle::OracleSample periodic(SimTime t, std::vector<oracle::Cycle> cycles, std::vector<bool> confirmed) {
  oracle::OracleSample s;
  s.time = t;
  s.context = "periodic";
  s.formed.assign(cycles.size(), t);
  s.cycles = std::move(cycles);
  s.confirmed = std::move(confirmed);
  return s;
}

oracle::OracleSample at_report(SimTime t, std::size_t idx, oracle::Cycle c, bool ok) {
  oracle::OracleSample s;
  s.time = t;
  s.context = "report";
  s.report_index = idx;
  s.cycles = {std::move(c)};
  s.confirmed = {ok};
  s.formed = {t - 50};
  return s;
}

detect::DeadlockReport report_at(SimTime t) {
  detect::DeadlockReport r;
  r.t_confirmed = t;
  return r;
}

const oracle::Cycle kLoop{{NodeId{0}, PortId{1}}, {NodeId{1}, PortId{1}}, {NodeId{2}, PortId{1}}};
const oracle::Cycle kOther{{NodeId{7}, PortId{0}}, {NodeId{8}, PortId{0}}};

}  // namespace

TEST_CASE("adjudication") {
  const SimTime end = 10'000, grace = 1'000;
  SUBCASE("a confirmed report is a true positive with its latency") {
    std::vector<oracle::OracleSample> log{periodic(100, {kLoop}, {true}), at_report(300, 0, kLoop, true)};
    const auto a = oracle::adjudicate({report_at(300)}, log, {}, end, grace);
    CHECK(a.true_positives == 1);
    CHECK(a.false_positives == 0);
    CHECK(a.false_negatives == 0);
    CHECK(a.latencies[0] == 200);
  }
  SUBCASE("an unconfirmed report is a false positive") {
    std::vector<oracle::OracleSample> log{at_report(300, 0, kLoop, false)};
    const auto a = oracle::adjudicate({report_at(300)}, log, {}, end, grace);
    CHECK(a.false_positives == 1);
    CHECK(a.latencies[0] < 0);
  }
  SUBCASE("an unreported incident is a false negative") {
    std::vector<oracle::OracleSample> log{periodic(100, {kLoop}, {true}), periodic(200, {}, {})};
    const auto a = oracle::adjudicate({}, log, {}, end, grace);
    CHECK(a.false_negatives == 1);
    CHECK(a.incidents.at(0).close_reason == "vanished");
  }
  SUBCASE("a young incident at the end is pending, an old one is missed") {
    auto a = oracle::adjudicate({}, {periodic(end - 10, {kLoop}, {true})}, {}, end, grace);
    CHECK(a.false_negatives == 0);
    CHECK(a.incidents.at(0).pending);
    a = oracle::adjudicate({}, {periodic(end - 2 * grace, {kLoop}, {true})}, {}, end, grace);
    CHECK(a.false_negatives == 1);
  }
  SUBCASE("a scripted drain before any report preempts the incident") {
    std::vector<oracle::InterventionLog> iv{{150, {kLoop[1]}, true}};
    std::vector<oracle::OracleSample> log{periodic(100, {kLoop}, {true}), periodic(200, {}, {})};
    const auto a = oracle::adjudicate({}, log, iv, end, grace);
    CHECK(a.false_negatives == 0);
    CHECK(a.incidents.at(0).preempted);
  }
  SUBCASE("unconfirmed cycles are not incidents") {
    const auto a = oracle::adjudicate({}, {periodic(100, {kLoop, kOther}, {false, false})}, {}, end, grace);
    CHECK(a.incidents.empty());
  }
  SUBCASE("overlapping cycles merge into one incident") {
    oracle::Cycle grown = kLoop;
    grown.push_back({NodeId{3}, PortId{2}});
    std::vector<oracle::OracleSample> log{periodic(100, {kLoop}, {true}), periodic(120, {grown}, {true}),
                                          at_report(130, 0, kLoop, true)};
    const auto a = oracle::adjudicate({report_at(130)}, log, {}, end, grace);
    CHECK(a.incidents.size() == 1);
    CHECK(a.incidents[0].ports.size() == 4);
    CHECK(a.true_positives == 1);
  }
}
