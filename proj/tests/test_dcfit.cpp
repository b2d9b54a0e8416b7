#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"

using namespace dcfit;
using namespace dcfit::detect;

namespace {

constexpr NodeId kSelf{5};
constexpr NodeId kOther{1};
constexpr PortId I0{0}, I1{1}, I2{2}, E1{1}, E2{2}, E3{3};

Detector make(std::size_t ports = 4, DetectorConfig cfg = {}) { return Detector(kSelf, NodeKind::kSwitch, ports, cfg); }

std::size_t count(const Effects& fx, const std::string& kind) {
  return static_cast<std::size_t>(
      std::count_if(fx.records.begin(), fx.records.end(), [&](const auto& r) { return r.kind == kind; }));
}

const TraceRecord* find(const Effects& fx, const std::string& kind) {
  for (const auto& r : fx.records)
    if (r.kind == kind) return &r;
  return nullptr;
}

CheckingMessage foreign(std::uint64_t seq, std::uint32_t hops = 0) {
  return CheckingMessage{kOther, PortId{1}, seq, PortRef{kOther, PortId{1}}, hops};
}

std::vector<PortId> targets(const Effects& fx) {
  std::vector<PortId> out;
  for (const auto& [p, m] : fx.checking) out.push_back(p);
  return out;
}

/// I0 holds bytes for E1, E1 is paused and I0 pauses. Returns the CM the
/// resulting episode starts with.
CheckingMessage open_episode(Detector& d, std::uint64_t bytes = 50'000) {
  d.on_enqueue(I0, E1, bytes, 0);
  d.on_pause_received(E1, {}, 0);
  auto fx = d.on_pause_generated(I0, 0);
  REQUIRE(fx.piggyback.size() == 1);
  return fx.piggyback.front();
}

/// Runs an episode up to LOOP_DECLARED and the launched check.
TemporalCheckPacket declare_and_launch(Detector& d, const CheckingMessage& own) {
  auto fx = d.on_checking_message_received(E1, own, 10);
  REQUIRE(count(fx, "LOOP_DECLARED") == 1);
  REQUIRE(fx.timers.size() == 1);
  auto launch = d.on_timer(fx.timers.front(), 10 + fx.timers.front().delay);
  REQUIRE(launch.checks.size() == 1);
  return launch.checks.front().second;
}

std::uint64_t state_bits(std::uint64_t n, std::uint64_t sid, std::uint64_t pid, std::uint64_t seq, std::uint64_t c) {
  // Mapping bit per (ingress, egress), pause and resume bit per port, C
  // stored (switch, port, seq) tuples per port.
  return n * n + 2 * n + n * c * (sid + pid + seq);
}

}  // namespace

TEST_CASE("traffic mapping bits follow enqueue and dequeue") {
  auto d = make();
  CHECK_FALSE(d.tm_bit(I1, E3));
  d.on_enqueue(I1, E3, 1000, 0);
  d.on_enqueue(I1, E3, 1000, 0);
  CHECK(d.tm_bit(I1, E3));
  CHECK(d.tm_bytes(I1, E3) == 2000);
  CHECK_FALSE(d.tm_bit(I2, E3));
  d.on_dequeue(I1, E3, 1000);
  CHECK(d.tm_bit(I1, E3));
  d.on_dequeue(I1, E3, 1000);
  CHECK_FALSE(d.tm_bit(I1, E3));
  CHECK_THROWS_AS(d.on_dequeue(I1, E3, 1), SimulationError);
}

TEST_CASE("congested egress is the one holding most bytes, lowest port on ties") {
  auto d = make();
  CHECK_FALSE(d.congested_egress(I0));
  d.on_enqueue(I0, E3, 3000, 0);
  d.on_enqueue(I0, E2, 3000, 0);
  CHECK(d.congested_egress(I0) == E2);
  d.on_enqueue(I0, E3, 1000, 0);
  CHECK(d.congested_egress(I0) == E3);
}

TEST_CASE("a pausing server is an initial trigger") {
  Detector server(NodeId{9}, NodeKind::kServer, 1, {});
  auto fx = server.on_pause_generated(PortId{0}, 0);
  REQUIRE(fx.piggyback.size() == 1);
  const auto& cm = fx.piggyback.front();
  CHECK(cm.s_gen_ini == NodeId{9});
  CHECK(cm.p_gen_ini == PortId{0});
  CHECK(cm.seq_id == 1);
  CHECK(cm.trigger == PortRef{NodeId{9}, PortId{0}});
  CHECK(cm.hops == 0);
  CHECK(count(fx, "TRIGGER_IDENTIFIED") == 1);
}

TEST_CASE("a switch pausing while its congested egress is unpaused is a trigger") {
  auto d = make();
  d.on_enqueue(I0, E2, 1000, 0);
  auto fx = d.on_pause_generated(I0, 0);
  REQUIRE(fx.piggyback.size() == 1);
  CHECK(fx.piggyback.front().key() == InitiatorKey{kSelf, I0});
  CHECK(fx.piggyback.front().trigger == PortRef{kSelf, I0});
  CHECK(count(fx, "TRIGGER_IDENTIFIED") == 1);
  CHECK(d.pausing(I0));
  CHECK(d.episode(I0).live);
}

TEST_CASE("a switch pausing behind a paused egress carries the stored message") {
  auto d = make();
  auto held = d.on_pause_received(E2, {foreign(7, 2)}, 0);
  CHECK(count(held, "CM_HELD") == 1);
  REQUIRE(d.stored(E2).size() == 1);
  CHECK(d.stored(E2).front().seq_id == 7);
  CHECK(d.stored(E2).front().hops == 3);

  d.on_enqueue(I0, E2, 1000, 0);
  auto fx = d.on_pause_generated(I0, 0);
  CHECK(count(fx, "TRIGGER_IDENTIFIED") == 0);
  REQUIRE(fx.piggyback.size() == 1);
  CHECK(fx.piggyback.front().key() == InitiatorKey{kOther, PortId{1}});
  CHECK(fx.piggyback.front().seq_id == 7);
  CHECK(fx.piggyback.front().hops == 3);
}

TEST_CASE("a checking message is forwarded to every pausing ingress mapped to its egress") {
  auto d = make();
  d.on_enqueue(I1, E3, 1000, 0);
  d.on_enqueue(I2, E3, 1000, 0);
  d.on_enqueue(I0, E1, 1000, 0);
  d.on_pause_received(E3, {}, 0);
  d.on_pause_generated(I1, 0);
  d.on_pause_generated(I2, 0);
  d.on_pause_generated(I0, 0);
  auto fx = d.on_checking_message_received(E3, foreign(4), 1);
  CHECK(targets(fx) == std::vector<PortId>{I1, I2});
  CHECK(count(fx, "CM_FORWARDED") == 2);
  // The same message again is not re-sent.
  auto again = d.on_checking_message_received(E3, foreign(4), 2);
  CHECK(again.checking.empty());
}

TEST_CASE("a checking message with no causal ingress is held") {
  auto d = make();
  d.on_pause_received(E3, {}, 0);
  auto fx = d.on_checking_message_received(E3, foreign(1), 1);
  CHECK(fx.checking.empty());
  CHECK(count(fx, "CM_HELD") == 1);
  REQUIRE(d.stored(E3).size() == 1);
  // A later enqueue behind the paused egress on a pausing ingress releases it.
  d.on_enqueue(I1, E2, 1000, 2);
  d.on_pause_generated(I1, 2);
  auto rel = d.on_enqueue(I1, E3, 1000, 3);
  CHECK(targets(rel) == std::vector<PortId>{I1});
}

TEST_CASE("a checking message on an unpaused port is dropped") {
  auto d = make();
  auto fx = d.on_checking_message_received(E3, foreign(1), 1);
  CHECK(count(fx, "CM_DROPPED") == 1);
  CHECK(d.stored(E3).empty());
}

TEST_CASE("the initiator receiving its own message declares a loop and later confirms it") {
  auto d = make();
  const auto own = open_episode(d);
  CHECK(own.key() == InitiatorKey{kSelf, I0});
  auto fx = d.on_checking_message_received(E1, own, 10);
  REQUIRE(count(fx, "LOOP_DECLARED") == 1);
  REQUIRE(fx.timers.size() == 1);
  CHECK(fx.timers.front().kind == TimerKind::kLaunchCheck);
  CHECK(fx.timers.front().delay == DetectorConfig{}.temporal_check_delay);

  auto launch = d.on_timer(fx.timers.front(), 110);
  REQUIRE(launch.checks.size() == 1);
  CHECK(launch.checks.front().first == I0);
  auto tc = launch.checks.front().second;
  CHECK(tc.path.empty());
  CHECK(tc.ingress_path == std::vector<PortRef>{PortRef{kSelf, I0}});
  CHECK(count(launch, "TC_SENT") == 1);
  REQUIRE(launch.timers.size() == 1);
  CHECK(launch.timers.front().kind == TimerKind::kCheckTimeout);

  auto done = d.on_temporal_check_received(E1, tc, 111);
  REQUIRE(done.reports.size() == 1);
  const auto& rep = done.reports.front();
  CHECK(rep.initiator == PortRef{kSelf, I0});
  CHECK(rep.loop_ports == std::vector<PortRef>{PortRef{kSelf, E1}});
  CHECK(rep.trigger_location == TriggerLocation::kOnLoop);
  CHECK(rep.closure_hops == 1);
  CHECK(rep.check_hops == 1);
  CHECK(rep.hop_count == 2);
  CHECK(d.episode(I0).confirmed);
  // A confirmed episode ignores the stale timeout.
  CHECK(d.on_timer(launch.timers.front(), 200).empty());
}

TEST_CASE("a resume during the temporal check drops it with the resume tag") {
  auto d = make();
  const auto own = open_episode(d);
  const auto tc = declare_and_launch(d, own);
  d.on_resume_received(E1, 150);
  CHECK(d.resume_tag(E1));
  d.on_pause_received(E1, {}, 160);
  CHECK_FALSE(d.resume_tag(E1));
  auto fx = d.on_temporal_check_received(E1, tc, 170);
  CHECK(fx.reports.empty());
  const auto* drop = find(fx, "TC_DROPPED");
  REQUIRE(drop);
  CHECK(drop->attrs.at("reason") == "resume_tag");
}

TEST_CASE("a resume on a port with no stored entries only flips its flags") {
  auto d = make();
  d.on_pause_received(E2, {}, 0);
  auto fx = d.on_resume_received(E2, 1);
  CHECK(fx.empty());
  CHECK_FALSE(d.paused(E2));
  CHECK(d.resume_tag(E2));
  CHECK(d.stored(E2).empty());
}

TEST_CASE("pause, resume, pause starts a new sequence number") {
  auto d = make();
  d.on_enqueue(I0, E2, 1000, 0);
  auto first = d.on_pause_generated(I0, 0);
  d.on_resume_generated(I0);
  CHECK_FALSE(d.episode(I0).live);
  auto second = d.on_pause_generated(I0, 5);
  REQUIRE(first.piggyback.size() == 1);
  REQUIRE(second.piggyback.size() == 1);
  CHECK(second.piggyback.front().seq_id == first.piggyback.front().seq_id + 1);
}

TEST_CASE("a transit check with an older sequence is dropped") {
  auto d = make();
  d.on_enqueue(I1, E3, 50'000, 0);
  d.on_pause_received(E3, {}, 0);
  d.on_pause_generated(I1, 0);
  d.on_checking_message_received(E3, foreign(2), 1);
  TemporalCheckPacket old{kOther, PortId{1}, 1, 3, {}, {}};
  auto fx = d.on_temporal_check_received(E3, old, 2);
  const auto* drop = find(fx, "TC_DROPPED");
  REQUIRE(drop);
  CHECK(drop->attrs.at("reason") == "seq_mismatch");

  TemporalCheckPacket cur{kOther, PortId{1}, 2, 3, {}, {PortRef{kOther, PortId{1}}}};
  auto ok = d.on_temporal_check_received(E3, cur, 3);
  REQUIRE(ok.checks.size() == 1);
  CHECK(ok.checks.front().first == I1);
  CHECK(ok.checks.front().second.hop_count == 4);
  CHECK(ok.checks.front().second.path == std::vector<PortRef>{PortRef{kSelf, E3}});
  CHECK(ok.checks.front().second.ingress_path.back() == PortRef{kSelf, I1});

  // The same check arriving again after visiting this port is a revisit.
  auto again = d.on_temporal_check_received(E3, ok.checks.front().second, 4);
  REQUIRE(find(again, "TC_DROPPED"));
  CHECK(find(again, "TC_DROPPED")->attrs.at("reason") == "revisit");
}

TEST_CASE("a transit check is not forwarded through an ingress holding at most hold_bytes") {
  DetectorConfig cfg;
  cfg.hold_bytes = 40'000;
  auto d = make(4, cfg);
  d.on_enqueue(I1, E3, 40'000, 0);
  d.on_pause_received(E3, {}, 0);
  d.on_pause_generated(I1, 0);
  d.on_checking_message_received(E3, foreign(1), 1);
  TemporalCheckPacket tc{kOther, PortId{1}, 1, 0, {}, {}};
  auto fx = d.on_temporal_check_received(E3, tc, 2);
  REQUIRE(find(fx, "TC_DROPPED"));
  CHECK(find(fx, "TC_DROPPED")->attrs.at("reason") == "draining");
  d.on_enqueue(I1, E3, 1000, 3);
  CHECK(d.on_temporal_check_received(E3, tc, 4).checks.size() == 1);
}

TEST_CASE("the same initiator on two ports exposes a middle switch") {
  auto d = make();
  d.on_pause_received(E1, {}, 0);
  d.on_pause_received(E2, {}, 0);
  auto first = d.on_checking_message_received(E1, foreign(3, 1), 1);
  CHECK(count(first, "MIDDLE_SWITCH") == 0);
  auto fx = d.on_checking_message_received(E2, foreign(3, 4), 2);
  const auto* mid = find(fx, "MIDDLE_SWITCH");
  REQUIRE(mid);
  CHECK(mid->attrs.at("ports") == Json::array({1, 2}));
  CHECK(mid->attrs.at("seqs") == Json::array({3, 3}));
  // No ingress is behind E2 yet, so the finding waits.
  CHECK(mid->attrs.at("pending") == true);

  // The next ingress to pause behind E2 starts a middle episode carrying the
  // original trigger.
  d.on_enqueue(I0, E2, 1000, 3);
  auto gen = d.on_pause_generated(I0, 3);
  CHECK(d.episode(I0).live);
  CHECK(d.episode(I0).kind == EpisodeKind::kMiddle);
  CHECK(d.episode(I0).trigger == PortRef{kOther, PortId{1}});
  CHECK(d.episode(I0).exposing_hops == 3);
  REQUIRE_FALSE(gen.piggyback.empty());
  CHECK(gen.piggyback.front().key() == InitiatorKey{kSelf, I0});
}

TEST_CASE("a duplicate message on one port takes no action") {
  auto d = make();
  d.on_pause_received(E1, {}, 0);
  d.on_checking_message_received(E1, foreign(3, 1), 1);
  auto fx = d.on_checking_message_received(E1, foreign(3, 1), 2);
  CHECK(fx.empty());
  CHECK(d.stored(E1).size() == 1);
}

TEST_CASE("a middle switch starts episodes on its causal pausing ingress ports") {
  auto d = make();
  const CheckingMessage k2{NodeId{2}, PortId{0}, 1, PortRef{NodeId{2}, PortId{0}}, 0};
  d.on_pause_received(E1, {}, 0);
  d.on_pause_received(E2, {k2}, 0);
  d.on_enqueue(I0, E2, 1000, 0);
  // Behind a paused egress with a stored message: carries it, no episode.
  auto gen = d.on_pause_generated(I0, 0);
  REQUIRE(gen.piggyback.size() == 1);
  CHECK(gen.piggyback.front().key() == k2.key());
  CHECK_FALSE(d.episode(I0).live);

  d.on_checking_message_received(E1, foreign(3, 1), 1);
  auto fx = d.on_checking_message_received(E2, foreign(3, 4), 2);
  const auto* mid = find(fx, "MIDDLE_SWITCH");
  REQUIRE(mid);
  CHECK(mid->attrs.at("started") == 1);
  const auto sent = std::find_if(fx.checking.begin(), fx.checking.end(),
                                 [](const auto& c) { return c.second.key() == InitiatorKey{kSelf, I0}; });
  REQUIRE(sent != fx.checking.end());
  CHECK(sent->first == I0);
  CHECK(sent->second.trigger == PortRef{kOther, PortId{1}});
  CHECK(d.episode(I0).kind == EpisodeKind::kMiddle);
}

TEST_CASE("stored entries are bounded by the capacity") {
  DetectorConfig cfg;
  cfg.capacity = 1;
  auto d = make(4, cfg);
  d.on_pause_received(E1, {}, 0);
  d.on_checking_message_received(E1, foreign(1), 1);
  CheckingMessage other{NodeId{2}, PortId{0}, 1, PortRef{NodeId{2}, PortId{0}}, 0};
  d.on_checking_message_received(E1, other, 2);
  CHECK(d.stored(E1).size() == 1);
  CHECK(d.stored(E1).front().key == InitiatorKey{NodeId{2}, PortId{0}});
  CHECK(d.counters().overflow == 1);
  CHECK_THROWS_AS(make(4, DetectorConfig{0}), ConfigError);
}

TEST_CASE("a disabled detector emits nothing") {
  DetectorConfig cfg;
  cfg.enabled = false;
  auto d = make(4, cfg);
  CHECK(d.on_enqueue(I0, E1, 1000, 0).empty());
  CHECK(d.on_pause_received(E1, {foreign(1)}, 0).empty());
  CHECK(d.on_pause_generated(I0, 0).empty());
  CHECK(d.on_checking_message_received(E1, foreign(1), 0).empty());
  CHECK(d.tm_bit(I0, E1));
  CHECK(d.pausing(I0));
}

TEST_CASE("a confirmed episode rearms when its closing egress resumes") {
  auto d = make();
  const auto own = open_episode(d);
  auto tc = declare_and_launch(d, own);
  REQUIRE(d.on_temporal_check_received(E1, tc, 120).reports.size() == 1);
  auto fx = d.on_resume_received(E1, 130);
  REQUIRE(fx.checking.size() == 1);
  CHECK(fx.checking.front().first == I0);
  CHECK(fx.checking.front().second.seq_id == own.seq_id + 1);
  CHECK_FALSE(d.episode(I0).confirmed);
  // Broken by recovery instead: same restart.
  auto d2 = make();
  auto own2 = open_episode(d2);
  auto tc2 = declare_and_launch(d2, own2);
  REQUIRE(d2.on_temporal_check_received(E1, tc2, 120).reports.size() == 1);
  CHECK(d2.on_loop_broken(I0, 130).checking.size() == 1);
}

TEST_CASE("a check that never returns restarts the episode up to the recheck limit") {
  DetectorConfig cfg;
  cfg.max_rechecks = 2;
  auto d = make(4, cfg);
  const auto own = open_episode(d);
  auto fx = d.on_checking_message_received(E1, own, 10);
  auto launch = d.on_timer(fx.timers.front(), 110);
  auto timeout = launch.timers.front();
  for (std::uint32_t i = 0; i < cfg.max_rechecks; ++i) {
    auto re = d.on_timer(timeout, 200);
    REQUIRE(re.checking.size() == 1);
    const auto cm = re.checking.front().second;
    auto decl = d.on_checking_message_received(E1, cm, 210);
    REQUIRE(decl.timers.size() == 1);
    timeout = d.on_timer(decl.timers.front(), 310).timers.front();
  }
  auto last = d.on_timer(timeout, 400);
  CHECK(count(last, "RECHECK_LIMIT") == 1);
  CHECK(last.checking.empty());
}

TEST_CASE("detector state size") {
  auto expect = [](std::uint64_t n, std::uint64_t sid, std::uint64_t pid, std::uint64_t seq, std::uint64_t c) {
    return static_cast<std::uint64_t>(std::ceil(static_cast<double>(state_bits(n, sid, pid, seq, c)) / 8.0));
  };
  CHECK(detector_state_size(64, 14, 6, 16, 1) == expect(64, 14, 6, 16, 1));
  CHECK(detector_state_size(4, 14, 6, 16, 1) == expect(4, 14, 6, 16, 1));
  CHECK(detector_state_size(1, 14, 6, 16, 1) == expect(1, 14, 6, 16, 1));
  CHECK(detector_state_size(48, 14, 6, 16, 4) == expect(48, 14, 6, 16, 4));
  // Within a factor of two of 1 KB for a 64-port switch.
  const auto big = detector_state_size(64, 14, 6, 16, 1);
  CHECK(big >= 512);
  CHECK(big <= 2048);
  // A few tens of bytes for four ports: order 0.1 KB.
  const auto small = detector_state_size(4, 14, 6, 16, 1);
  CHECK(small >= 10);
  CHECK(small < 100);
  CHECK_THROWS_AS(detector_state_size(0, 14, 6, 16, 1), ConfigError);
}
