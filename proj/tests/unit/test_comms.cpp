#include <algorithm>
#include <map>
#include <set>

#include "comms_world.hpp"
#include "doctest.h"
#include "graph_oracle.hpp"
#include "lunasim/comms/bus.hpp"
#include "lunasim/sim/rng.hpp"

using namespace lunasim;
using comms::Qos;
using testing::CommsWorld;

TEST_CASE("comms: topic parsing and patterns") {
  const auto t = comms::Topic::parse("leo1/odom");
  CHECK(t.ns == "leo1");
  CHECK(t.name == "odom");
  CHECK(t.path() == "leo1/odom");
  CHECK_THROWS_AS(comms::Topic::parse("odom"), comms::CommsError);
  CHECK_THROWS_AS(comms::Topic::parse("/odom"), comms::CommsError);
  CHECK_THROWS_AS(comms::Topic::parse("*/odom"), comms::CommsError);
  CHECK(comms::pattern_matches("*/status", "leo2/status"));
  CHECK(comms::pattern_matches("leo2/*", "leo2/status"));
  CHECK_FALSE(comms::pattern_matches("*/status", "leo2/statusx"));
  CHECK_FALSE(comms::pattern_matches("leo1/status", "leo2/status"));
  CHECK_FALSE(comms::valid_pattern("*/*"));
  CHECK_FALSE(comms::valid_pattern("status"));
}

TEST_CASE("comms: namespace isolation (property)") {
  sim::RngStream rng(5, "comms.isolation");
  const std::vector<std::string> ns{"leo1", "leo2", "leo3", "lander", "global"};
  const std::vector<std::string> names{"odom", "map", "scan", "status", "cmd_vel"};
  for (int i = 0; i < 2000; ++i) {
    const auto& a = ns[rng.below(ns.size())];
    const auto& b = ns[rng.below(ns.size())];
    const auto& n1 = names[rng.below(names.size())];
    const auto& n2 = names[rng.below(names.size())];
    const std::string topic = a + "/" + n1;
    const bool bound_b = rng.bernoulli(0.5);
    const std::string pattern = bound_b ? b + "/" + n2 : b + "/*";
    if (a != b) CHECK_FALSE(comms::pattern_matches(pattern, topic));
  }
}

TEST_CASE("comms: announcement codec round trip") {
  comms::Announcement a{"leo1", {"leo1"}, {"leo1/cmd_vel", "*/map"}, 2.0};
  const auto bytes = comms::encode_announcement(a);
  const auto b = comms::decode_announcement(bytes);
  CHECK(b.node == "leo1");
  CHECK(b.namespaces == a.namespaces);
  CHECK(b.subscriptions == a.subscriptions);
  CHECK(b.period_s == 2.0);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(comms::decode_announcement(bad), DecodeError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(comms::decode_announcement(cut), DecodeError);
}

TEST_CASE("comms: gateway buffer eviction rules") {
  auto held = [](Qos q, std::size_t n, std::uint64_t seq) {
    comms::HeldEnvelope h;
    h.qos = q;
    h.seq = seq;
    h.topic = std::make_shared<const std::string>("leo1/x");
    h.payload = std::make_shared<const Bytes>(n, 0);
    return h;
  };
  comms::GatewayBuffer b(1000);
  CHECK(b.push(held(Qos::kBestEffort, 300, 1)) == comms::BufferOffer::kAccepted);
  CHECK(b.push(held(Qos::kReliable, 300, 2)) == comms::BufferOffer::kAccepted);
  CHECK(b.push(held(Qos::kBestEffort, 300, 3)) == comms::BufferOffer::kAccepted);
  // Needs 300 more: evicts seq 1, the oldest best-effort entry.
  CHECK(b.push(held(Qos::kBestEffort, 300, 4)) == comms::BufferOffer::kAccepted);
  CHECK(b.best_effort_dropped() == 1);
  CHECK(b.front().seq == 2);
  // A 700-byte reliable envelope evicts both remaining best-effort entries.
  CHECK(b.push(held(Qos::kReliable, 700, 5)) == comms::BufferOffer::kAccepted);
  CHECK(b.best_effort_dropped() == 3);
  CHECK(b.size() == 2);
  CHECK(b.push(held(Qos::kReliable, 10, 6)) == comms::BufferOffer::kRejectedReliable);
  CHECK(b.reliable_rejected() == 1);
  CHECK(b.pop().seq == 2);
  CHECK(b.pop().seq == 5);
  CHECK(b.empty());
  CHECK(b.bytes() == 0);
}

TEST_CASE("comms: odom reaches the ground station no sooner than the lander leg allows") {
  CommsWorld w(1);
  std::vector<double> lat;
  w.bus.subscribe(w.gs, "*/odom", [&](const comms::Envelope& e) { lat.push_back(e.delivered_at - e.sent_at); });
  w.start();
  const auto h = w.handler("t");
  for (int i = 0; i < 20; ++i) {
    w.kernel.schedule(5.0 + i * 0.5, h, [&] { w.bus.publish(w.rovers[0], "leo1/odom", Bytes(48, 1), Qos::kBestEffort); });
  }
  w.kernel.run_until(30.0);
  REQUIRE(lat.size() == 20);
  const double min_path = 1.0 + 2 * 1e-4;
  for (double l : lat) CHECK(l >= min_path);
}

TEST_CASE("comms: publishing without subscribers sends nothing but discovery") {
  CommsWorld w(2);
  w.start();
  w.kernel.run_until(5.0);
  const auto r = w.bus.publish(w.rovers[0], "leo1/status", Bytes(100, 0), Qos::kReliable);
  CHECK(r.status == comms::PublishStatus::kNoSubscribers);
  w.kernel.run_until(10.0);
  for (const auto& [topic, c] : w.bus.traffic(w.rovers[0])) {
    CHECK(topic.ends_with("/discovery"));
  }
}

TEST_CASE("comms: large payload is fragmented and reassembled exactly") {
  CommsWorld w(3);
  std::vector<Bytes> got;
  w.bus.subscribe(w.lander, "leo1/chunk", [&](const comms::Envelope& e) { got.push_back(*e.payload); });
  w.start();
  w.kernel.run_until(3.0);
  const Bytes sent = testing::pattern_bytes(6000, 42);
  CHECK(w.bus.fragment_count(6000) == 5);
  CHECK(w.bus.fragment_count(1436) == 1);
  CHECK(w.bus.fragment_count(1437) == 2);
  const auto r = w.bus.publish(w.rovers[0], "leo1/chunk", sent, Qos::kReliable);
  CHECK(r.status == comms::PublishStatus::kSent);
  w.kernel.run_until(6.0);
  REQUIRE(got.size() == 1);
  CHECK(got[0] == sent);
}

TEST_CASE("comms: wildcard subscription receives every rover stream once") {
  CommsWorld w(4, {{30, 18}, {20, 25}, {28, 10}});
  std::map<std::string, int> per;
  w.bus.subscribe(w.gs, "*/status", [&](const comms::Envelope& e) { per[e.topic] += 1; });
  // A second subscriber on the same pattern gets its own copy of each
  // envelope; the stream still crosses the mesh once.
  const auto id1 = w.bus.subscribe(w.gs, "*/status", [&](const comms::Envelope& e) { per[e.topic] += 100; });
  CHECK(id1 == 2);
  w.start();
  const auto h = w.handler("t");
  for (int i = 0; i < 10; ++i) {
    w.kernel.schedule(6.0 + i, h, [&] {
      for (std::size_t r = 0; r < 3; ++r) {
        const std::string ns = "leo" + std::to_string(r + 1);
        w.bus.publish(w.rovers[r], ns + "/status", Bytes(20, 0), Qos::kBestEffort);
      }
    });
  }
  w.kernel.run_until(20.0);
  CHECK(per.size() == 3);
  for (const auto& [t, n] : per) CHECK(n == 1010);
  CHECK(w.bus.traffic(w.gs).at("leo1/status").bytes_in == 10 * (20 + w.bus.params().message_overhead_bytes));
}

TEST_CASE("comms: subscription made before the publisher exists") {
  CommsWorld w(5, {});
  std::vector<std::uint64_t> seqs;
  w.bus.subscribe(w.gs, "*/status", [&](const comms::Envelope& e) { seqs.push_back(e.seq); });
  w.start();
  w.kernel.run_until(10.0);
  const auto n = w.net.add_node("leo9", {26, 18});
  w.bus.attach(n, {"leo9"});
  const auto h = w.handler("t");
  int sent = 0;
  for (int i = 0; i < 20; ++i) {
    w.kernel.schedule(10.0 + i * 0.5, h, [&] {
      if (w.bus.publish(n, "leo9/status", Bytes(20, 0), Qos::kBestEffort).status == comms::PublishStatus::kSent) ++sent;
    });
  }
  w.kernel.run_until(30.0);
  CHECK(sent > 10);
  CHECK(seqs.size() == static_cast<std::size_t>(sent));
}

TEST_CASE("comms: discovery liveness and expiry") {
  CommsWorld w(6, {{30, 18}});
  w.start();
  w.kernel.run_until(10.0);
  CHECK(w.bus.namespaces(w.gs).count("leo1") == 1);
  CHECK(w.bus.namespaces(w.gs).count("lander") == 1);

  // A new rover appears within two periods.
  const auto n = w.net.add_node("leo2", {27, 20});
  w.bus.attach(n, {"leo2"});
  const double t_on = w.now();
  w.kernel.run_until(t_on + 2 * 2.0);
  CHECK(w.bus.namespaces(w.gs).count("leo2") == 1);

  // Shutdown: expires three periods after it was last heard.
  w.kernel.run_until(20.0);
  w.bus.set_powered(w.rovers[0], false);
  const double last = *w.bus.last_seen(w.gs, "leo1");
  w.kernel.run_until(last + 3 * 2.0 - 0.01);
  CHECK(w.bus.namespaces(w.gs).count("leo1") == 1);
  w.kernel.run_until(last + 3 * 2.0 + 0.01);
  CHECK(w.bus.namespaces(w.gs).count("leo1") == 0);
  // The lander never expires.
  w.kernel.run_until(200.0);
  CHECK(w.bus.namespaces(w.gs).count("lander") == 1);
  CHECK(w.bus.namespaces(w.gs).count("leo2") == 1);
}

TEST_CASE("comms: unpowered node publishes nothing and transmits nothing") {
  CommsWorld w(7);
  w.bus.subscribe(w.gs, "*/status", [](const comms::Envelope&) {});
  w.start();
  w.kernel.run_until(5.0);
  w.bus.set_powered(w.rovers[0], false);
  std::uint64_t frames = 0;
  w.net.set_tx_observer([&](const mesh::TxRecord& r) { frames += r.from == w.rovers[0] ? 1 : 0; });
  CHECK(w.bus.publish(w.rovers[0], "leo1/status", Bytes(5, 0), Qos::kBestEffort).status ==
        comms::PublishStatus::kUnpowered);
  w.kernel.run_until(30.0);
  CHECK(frames == 0);
}

TEST_CASE("comms: rate budgets") {
  CommsWorld w(8);
  w.bus.subscribe(w.lander, "*/map", [](const comms::Envelope&) {});
  w.start();
  w.kernel.run_until(5.0);
  CHECK(w.bus.publish(w.rovers[0], "leo1/map", Bytes(10, 0), Qos::kReliable).status == comms::PublishStatus::kSent);
  w.kernel.run_until(6.0);
  CHECK(w.bus.publish(w.rovers[0], "leo1/map", Bytes(10, 0), Qos::kReliable).status ==
        comms::PublishStatus::kRateLimited);
  w.kernel.run_until(7.0);
  CHECK(w.bus.publish(w.rovers[0], "leo1/map", Bytes(10, 0), Qos::kReliable).status == comms::PublishStatus::kSent);
}

TEST_CASE("comms: reliable delivery under loss has no gaps or duplicates (property)") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    // 190 m from the lander: roughly half of all radio attempts fail.
    CommsWorld w(seed, {{215, 18}});
    std::vector<std::uint64_t> got;
    std::vector<std::uint64_t> be;
    w.bus.subscribe(w.lander, "leo1/data", [&](const comms::Envelope& e) { got.push_back(e.seq); });
    w.bus.subscribe(w.lander, "leo1/tele", [&](const comms::Envelope& e) { be.push_back(e.seq); });
    w.start();
    const auto h = w.handler("t");
    std::vector<std::uint64_t> sent;
    for (int i = 0; i < 150; ++i) {
      w.kernel.schedule(5.0 + i * 0.4, h, [&, i] {
        const auto r = w.bus.publish(w.rovers[0], "leo1/data", testing::pattern_bytes(200 + 37 * (i % 60), i),
                                     Qos::kReliable);
        if (r.status == comms::PublishStatus::kSent) sent.push_back(r.seq);
        w.bus.publish(w.rovers[0], "leo1/tele", Bytes(30, 0), Qos::kBestEffort);
      });
    }
    w.kernel.run_until(200.0);
    CHECK(sent.size() == 150);
    CHECK(got == sent);
    CHECK(w.bus.gaps(w.lander) == 0);
    CHECK(std::is_sorted(be.begin(), be.end()));
    CHECK(std::adjacent_find(be.begin(), be.end()) == be.end());
    CHECK(be.size() < 150);
  }
}

TEST_CASE("comms: blackout holds ground-bound maps at the lander, then flushes them in order") {
  CommsWorld w(9);
  std::vector<std::pair<double, std::uint64_t>> at_gs;
  std::uint64_t lander_maps = 0;
  w.bus.subscribe(w.gs, "*/map", [&](const comms::Envelope& e) { at_gs.emplace_back(e.delivered_at, e.seq); });
  w.bus.subscribe(w.lander, "*/map", [&](const comms::Envelope&) { ++lander_maps; });
  w.start();
  w.net.inject_blackout(40.0, 100.0, {{"lander", "ground_station"}});
  const auto h = w.handler("t");
  std::vector<std::uint64_t> sent;
  for (int i = 0; i < 70; ++i) {
    w.kernel.schedule(5.0 + i * 2.0, h, [&, i] {
      const auto r = w.bus.publish(w.rovers[0], "leo1/map", testing::pattern_bytes(5000, i), Qos::kReliable);
      if (r.status == comms::PublishStatus::kSent) sent.push_back(r.seq);
    });
  }
  w.kernel.run_until(170.0);
  CHECK(sent.size() == 70);
  CHECK(lander_maps == 70);
  std::vector<std::uint64_t> seqs;
  for (const auto& [t, s] : at_gs) {
    CHECK_FALSE((t >= 40.0 && t <= 100.0));
    seqs.push_back(s);
  }
  CHECK(seqs == sent);
  CHECK(w.bus.gaps(w.gs) == 0);
  CHECK(w.bus.gateway_buffer()->peak_bytes() >= 25 * 5000);
  // Burst right after restoration.
  const auto burst = std::count_if(at_gs.begin(), at_gs.end(), [](const auto& p) { return p.first > 100.0 && p.first < 104.0; });
  CHECK(burst >= 25);
}

TEST_CASE("comms: gateway overflow drops the oldest best-effort telemetry") {
  comms::CommsParams p;
  p.gateway_capacity_bytes = 10 * 100;
  CommsWorld w(10, {{30, 18}}, p);
  std::vector<std::uint64_t> got;
  w.bus.subscribe(w.gs, "*/status", [&](const comms::Envelope& e) { got.push_back(e.seq); });
  w.start();
  w.net.inject_blackout(10.0, 40.0, {{"lander", "ground_station"}});
  const auto h = w.handler("t");
  for (int i = 0; i < 25; ++i) {
    w.kernel.schedule(12.0 + i, h, [&] { w.bus.publish(w.rovers[0], "leo1/status", Bytes(100, 0), Qos::kBestEffort); });
  }
  w.kernel.run_until(60.0);
  CHECK(w.bus.gateway_buffer()->best_effort_dropped() == 15);
  REQUIRE(got.size() == 10);
  CHECK(got.front() == 16);
  CHECK(got.back() == 25);
  const auto drops = std::count_if(w.bus.events().begin(), w.bus.events().end(),
                                   [](const comms::CommsEvent& e) { return e.kind == comms::EventKind::kGatewayDropped; });
  CHECK(drops == 15);
}

TEST_CASE("comms: command round trip through the lander") {
  CommsWorld w(11, {{30, 18}});
  std::vector<double> acks;
  double sent_at = 0.0;
  w.bus.subscribe(w.rovers[0], "leo1/cmd", [](const comms::Envelope&) {});
  w.bus.set_ack_observer(w.gs, [&](const std::string&, std::uint64_t, mesh::NodeIndex, double t) { acks.push_back(t - sent_at); });
  w.start();
  const auto h = w.handler("t");
  for (int i = 0; i < 5; ++i) {
    w.kernel.schedule(10.0 + 10.0 * i, h, [&] {
      sent_at = w.now();
      w.bus.publish(w.gs, "leo1/cmd", Bytes(32, 7), Qos::kReliable);
    });
  }
  w.kernel.run_until(70.0);
  REQUIRE(acks.size() == 5);
  // 32 B payload + 64 B overhead out, a 64 B ack back; wired 10 Mbit/s and
  // a 5 m radio hop at the top rate step.
  auto hop = [](double bytes, double rate) { return 1e-4 + 8.0 * bytes / rate; };
  const double ser = hop(96, 10e6) + hop(96, 54e6) + hop(64, 54e6) + hop(64, 10e6);
  // Skip the first: its route discovery is part of the cost.
  for (std::size_t i = 1; i < acks.size(); ++i) {
    CHECK(acks[i] >= 2.0);
    CHECK(acks[i] <= 2.0 + ser + 20e-6);
  }
}

TEST_CASE("comms: wire bytes equal payload, overhead, acks and discovery exactly") {
  CommsWorld w(12, {{25, 18}}, {}, false);
  std::uint64_t got = 0;
  w.bus.subscribe(w.lander, "leo1/blob", [&](const comms::Envelope&) { ++got; });
  w.start();
  const auto h = w.handler("t");
  std::uint64_t expected_data = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t n = 100 + 97 * i;
    w.kernel.schedule(5.0 + i * 0.5, h, [&, n, i] {
      const auto r = w.bus.publish(w.rovers[0], "leo1/blob", testing::pattern_bytes(n, i), Qos::kReliable);
      REQUIRE(r.status == comms::PublishStatus::kSent);
      expected_data += n + 64 + 64 * w.bus.fragment_count(n);
    });
  }
  w.kernel.run_until(40.0);
  CHECK(got == 40);
  std::uint64_t blob = 0, discovery = 0, total_out = 0;
  for (const auto& ep : {w.lander, w.gs, w.rovers[0]}) {
    for (const auto& [topic, c] : w.bus.traffic(ep)) {
      total_out += c.bytes_out;
      if (topic == "leo1/blob") blob += c.bytes_out;
      if (topic.ends_with("/discovery")) discovery += c.bytes_out;
    }
  }
  CHECK(blob == expected_data);
  CHECK(total_out == blob + discovery);
  // Lossless links, so every byte crosses each hop exactly once. Rover and
  // ground station announce to two peers each: half goes one hop to the
  // lander, half goes two hops to the other end.
  std::uint64_t two_hop = 0;
  for (const auto& ep : {w.rovers[0], w.gs}) {
    for (const auto& [topic, c] : w.bus.traffic(ep))
      if (topic.ends_with("/discovery")) two_hop += c.bytes_out / 2;
  }
  CHECK(w.net.wire().data_bytes == total_out + two_hop);
}
