#include <chrono>
#include <thread>

#include <boost/asio.hpp>

#include "comms_world.hpp"
#include "doctest.h"
#include "lunasim/ground/gateway_server.hpp"
#include "lunasim/ground/ground_station.hpp"
#include "lunasim/ground/protocol.hpp"
#include "lunasim/sim/rng.hpp"

using namespace lunasim;
using testing::CommsWorld;

namespace {

struct Fleet {
  CommsWorld w;
  ground::GroundStation gs;
  std::map<std::string, std::vector<comms::Envelope>> at_rover;

  explicit Fleet(std::uint64_t seed, ground::GroundStationOptions opt = {})
      : w(seed, {{30, 18}, {20, 25}, {28, 10}}), gs(w.kernel, w.bus, w.net, w.gs, opt) {
    for (std::size_t i = 0; i < w.rovers.size(); ++i) {
      const std::string ns = "leo" + std::to_string(i + 1);
      for (auto t : {"cmd_vel", "lights", "nav_goal", "reset_odom", "reboot"}) {
        w.bus.subscribe(w.rovers[i], ns + "/" + t, [this, ns](const comms::Envelope& e) { at_rover[ns].push_back(e); });
      }
    }
    w.start();
    gs.start();
  }
};

ground::Command teleop(double v) {
  ground::Command c;
  c.kind = ground::CommandKind::kTeleop;
  c.teleop = {v, 0.0};
  return c;
}

}  // namespace

TEST_CASE("ground: framing round trip and stream splitting") {
  const std::string body = R"({"type":"hello"})";
  const auto f = ground::frame(body);
  CHECK(f.size() == body.size() + 4);
  CHECK(static_cast<unsigned char>(f[3]) == body.size());
  ground::FrameDecoder d;
  const std::string two = f + ground::frame("{}");
  for (char c : two) d.feed(std::string_view(&c, 1));
  CHECK(d.next() == body);
  CHECK(d.next() == "{}");
  CHECK_FALSE(d.next());
  ground::FrameDecoder big;
  big.feed(std::string("\x7f\xff\xff\xff", 4));
  CHECK_THROWS_AS(big.next(), ground::ProtocolError);
}

TEST_CASE("ground: client message parsing") {
  using ground::parse_client_message;
  auto m = parse_client_message(R"({"type":"command","kind":"teleop","v":0.1,"omega":-0.2})");
  CHECK(m.type == ground::ClientType::kCommand);
  CHECK(m.command.kind == ground::CommandKind::kTeleop);
  CHECK(m.command.teleop.omega == -0.2);
  m = parse_client_message(R"({"type":"command","kind":"select","name":null})");
  CHECK(m.type == ground::ClientType::kSelect);
  CHECK_FALSE(m.select);
  m = parse_client_message(R"({"type":"command","kind":"nav_goal","x":3,"y":4})");
  CHECK(m.command.goal.tolerance == 0.3);
  m = parse_client_message(R"({"type":"set_rate","factor":4})");
  CHECK(*m.realtime_factor == 4.0);
  for (const char* bad : {"", "[]", "{}", R"({"type":1})", R"({"type":"snapshot"})", R"({"type":"nope"})",
                          R"({"type":"command"})", R"({"type":"command","kind":"fly"})",
                          R"({"type":"command","kind":"teleop","v":"fast","omega":0})",
                          R"({"type":"command","kind":"lights","on":1})", R"({"type":"set_rate"})",
                          R"({"type":"set_rate","factor":-1})", R"({"type":"command","kind":"select"})"}) {
    CHECK_THROWS_AS(parse_client_message(bad), ground::ProtocolError);
  }
}

TEST_CASE("ground: client messages survive to_json and parse (property)") {
  sim::RngStream rng(3, "ground.msgs");
  for (int i = 0; i < 500; ++i) {
    ground::ClientMessage m;
    m.type = static_cast<ground::ClientType>(rng.below(6));
    m.command.kind = static_cast<ground::CommandKind>(rng.below(5));
    m.command.teleop = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    m.command.lights = rng.bernoulli(0.5);
    m.command.reset = {rng.uniform(0, 50), rng.uniform(0, 36), rng.uniform(-3, 3)};
    m.command.goal = {rng.uniform(0, 50), rng.uniform(0, 36), rng.uniform(0.1, 1)};
    if (m.type == ground::ClientType::kSelect && rng.bernoulli(0.5)) m.select = "leo" + std::to_string(rng.below(9));
    if (m.type == ground::ClientType::kSetRate) m.realtime_factor = rng.uniform(0.1, 10);
    const auto j = ground::to_json(m);
    const auto back = ground::parse_client_message(j.dump());
    CHECK(ground::to_json(back) == j);
  }
}

TEST_CASE("ground: deltas reproduce the next snapshot (property)") {
  sim::RngStream rng(4, "ground.delta");
  nlohmann::json state = ground::snapshot_message({{"rovers", nlohmann::json::object()}, {"sim_time", 0.0}}, 1);
  for (std::uint64_t seq = 2; seq < 200; ++seq) {
    nlohmann::json next = state;
    next["sim_time"] = static_cast<double>(seq);
    const std::string ns = "leo" + std::to_string(rng.below(4));
    if (rng.bernoulli(0.3)) next["rovers"].erase(ns);
    else next["rovers"][ns] = {{"x", rng.uniform(0, 1)}, {"hops", nlohmann::json::array({"lander"})}};
    next = ground::snapshot_message(next, seq);
    const auto d = ground::delta_message(state, next, seq - 1, seq);
    const auto applied = ground::apply_delta(state, d);
    CHECK(applied == next);
    state = applied;
  }
  auto d = ground::delta_message(state, state, 5, 6);
  CHECK_THROWS_AS(ground::apply_delta(state, d), ground::ProtocolError);
}

TEST_CASE("ground: no selection means no command envelopes") {
  Fleet f(1);
  f.w.kernel.run_until(10.0);
  const auto frames_before = f.w.bus.traffic(f.w.gs);
  ground::Command c = teleop(0.1);
  for (int i = 0; i < 20; ++i) {
    CHECK_FALSE(f.gs.forward_command(c).sent);
    for (auto k : {ground::CommandKind::kLights, ground::CommandKind::kNavGoal, ground::CommandKind::kReboot,
                   ground::CommandKind::kResetOdom}) {
      c.kind = k;
      CHECK_FALSE(f.gs.forward_command(c).sent);
    }
    c.kind = ground::CommandKind::kTeleop;
    f.w.kernel.run_until(f.w.now() + 0.2);
  }
  f.w.kernel.run_until(30.0);
  CHECK(f.gs.commands_sent() == 0);
  CHECK(f.at_rover.empty());
  for (const auto& [topic, c2] : f.w.bus.traffic(f.w.gs)) CHECK(topic.ends_with("/discovery"));
}

TEST_CASE("ground: selection routes commands to the selected namespace") {
  Fleet f(2);
  f.w.kernel.run_until(10.0);
  CHECK_FALSE(f.gs.select("leo2").stale);
  const auto r = f.gs.forward_command(teleop(0.1));
  CHECK(r.sent);
  CHECK(r.topic == "leo2/cmd_vel");
  CHECK(r.publish->status == comms::PublishStatus::kSent);
  ground::Command lights;
  lights.kind = ground::CommandKind::kLights;
  lights.lights = true;
  CHECK(f.gs.forward_command(lights).topic == "leo2/lights");
  ground::Command goal;
  goal.kind = ground::CommandKind::kNavGoal;
  goal.goal = {12.0, 7.0, 0.3};
  CHECK(f.gs.forward_command(goal).topic == "leo2/nav_goal");
  // Teleop above 10 Hz is held back.
  CHECK_FALSE(f.gs.forward_command(teleop(0.2)).sent);
  f.w.kernel.run_until(15.0);
  REQUIRE(f.at_rover["leo2"].size() == 3);
  CHECK(f.at_rover["leo2"][0].qos == comms::Qos::kBestEffort);
  CHECK(f.at_rover["leo2"][1].qos == comms::Qos::kReliable);
  CHECK(msg::decode<msg::Lights>(*f.at_rover["leo2"][1].payload).on);
  CHECK(msg::decode<msg::NavGoal>(*f.at_rover["leo2"][2].payload).x == 12.0);
  CHECK(f.at_rover.count("leo1") == 0);

  const auto s = f.gs.select("leo9");
  CHECK(s.stale);
  CHECK_FALSE(f.gs.forward_command(lights).sent);
  CHECK(f.gs.select("lander").stale);
}

TEST_CASE("ground: teleop during a blackout never arrives and telemetry ages") {
  Fleet f(3);
  f.w.net.inject_blackout(20.0, 50.0, {{"lander", "ground_station"}});
  const auto h = f.w.handler("pub");
  for (int i = 0; i < 60; ++i) {
    f.w.kernel.schedule(5.0 + i, h, [&f] {
      f.w.bus.publish(f.w.rovers[0], "leo1/status", msg::encode(msg::Status{f.w.now()}), comms::Qos::kBestEffort);
    });
  }
  f.w.kernel.run_until(12.0);
  f.gs.select("leo1");
  f.w.kernel.run_until(19.9);
  CHECK(f.gs.telemetry_age("leo1") < 2.0);
  for (int i = 0; i < 50; ++i) {
    f.gs.forward_command(teleop(0.1));
    f.w.kernel.run_until(f.w.now() + 0.2);
  }
  CHECK(f.gs.telemetry_age("leo1") > 10.0);
  f.w.kernel.run_until(49.0);
  CHECK(f.at_rover["leo1"].empty());
  CHECK(f.gs.telemetry_age("leo1") > 25.0);
  f.w.kernel.run_until(60.0);
  CHECK(f.gs.telemetry_age("leo1") < 3.0);
}

TEST_CASE("ground: monitoring does not change a single wire byte") {
  auto run = [](bool monitor) {
    ground::GroundStationOptions opt;
    opt.bandwidth_enabled = monitor;
    opt.bandwidth_window_s = 1.0;
    Fleet f(4, opt);
    const auto h = f.w.handler("pub");
    for (int i = 0; i < 30; ++i) {
      f.w.kernel.schedule(5.0 + 2.0 * i, h, [&f, i] {
        f.w.bus.publish(f.w.rovers[1], "leo2/map", testing::pattern_bytes(4000, i), comms::Qos::kReliable);
        f.w.bus.publish(f.w.rovers[0], "leo1/status", Bytes(30, 1), comms::Qos::kBestEffort);
      });
    }
    f.w.kernel.run_until(80.0);
    if (monitor) {
      const auto& rep = f.gs.bandwidth();
      double leo2 = rep.namespaces.count("leo2") ? rep.namespaces.at("leo2").in_bps : 0.0;
      for (const auto& [ns, row] : rep.namespaces) {
        if (ns != "leo2") CHECK(row.in_bps <= leo2);
      }
      CHECK(leo2 > 0.0);
    }
    const auto w = f.w.net.wire();
    return std::make_tuple(w.frames, w.bytes, w.data_bytes, w.control_bytes);
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("ground: idle fleet shows only discovery traffic") {
  ground::GroundStationOptions opt;
  opt.bandwidth_window_s = 10.0;
  Fleet f(5, opt);
  f.w.kernel.run_until(61.0);
  const auto& rep = f.gs.bandwidth();
  CHECK(rep.total_in_bps > 0.0);
  for (const auto& [ns, row] : rep.namespaces) {
    for (const auto& [topic, c] : row.topics) CHECK(topic.ends_with("/discovery"));
  }
  // Each peer announces once per 2 s period.
  const auto one = comms::encode_announcement({"leo1", {"leo1"}, {"leo1/cmd_vel", "leo1/lights", "leo1/nav_goal",
                                                                    "leo1/reset_odom", "leo1/reboot"},
                                                2.0})
                       .size();
  CHECK(rep.namespaces.at("leo1").in_bps == doctest::Approx(8.0 * (one + 64) / 2.0).epsilon(0.01));
}

TEST_CASE("ground: snapshot carries discovery, telemetry and selection") {
  ground::GroundStationOptions opt;
  Fleet f(6, opt);
  f.w.kernel.run_until(8.0);
  f.w.bus.publish(f.w.rovers[0], "leo1/odom", msg::encode(msg::Odom{8.0, {30, 18, 0.5}, 0.1, 0.0, 1.0}),
                  comms::Qos::kBestEffort);
  f.w.kernel.run_until(12.0);
  f.gs.select("leo1");
  const auto s = f.gs.snapshot();
  CHECK(s["type"] == "snapshot");
  CHECK(s["selection"]["name"] == "leo1");
  CHECK(s["rovers"]["leo1"]["odom"]["theta"] == 0.5);
  CHECK(s["rovers"]["leo1"]["hops"].size() == 3);
  CHECK_FALSE(s["rovers"]["leo1"].contains("truth"));
  CHECK(s["rovers"]["leo1"]["merged_pose"].is_null());
  std::set<std::string> names;
  for (const auto& n : s["namespaces"]) names.insert(n["name"].get<std::string>());
  CHECK(names == std::set<std::string>{"lander", "leo1", "leo2", "leo3"});
}

namespace {

namespace asio = boost::asio;

struct Client {
  asio::io_context io;
  asio::ip::tcp::socket sock{io};
  ground::FrameDecoder dec;

  explicit Client(std::uint16_t port) { sock.connect({asio::ip::make_address("127.0.0.1"), port}); }
  void send(const std::string& body) { asio::write(sock, asio::buffer(ground::frame(body))); }
  nlohmann::json recv() {
    for (;;) {
      if (auto m = dec.next()) return nlohmann::json::parse(*m);
      std::array<char, 4096> buf{};
      const auto n = sock.read_some(asio::buffer(buf));
      dec.feed({buf.data(), n});
    }
  }
};

}  // namespace

TEST_CASE("ground: gateway sessions get a snapshot, then deltas") {
  std::mutex mu;
  std::vector<std::pair<std::uint64_t, nlohmann::json>> inbound;
  ground::GatewayServer server({"127.0.0.1", 0, 50.0}, [&](const ground::ClientMessage& m, std::uint64_t id) {
    std::lock_guard lock(mu);
    inbound.emplace_back(id, ground::to_json(m));
  });
  server.start();
  REQUIRE(server.port() != 0);
  server.publish({{"sim_time", 1.0}, {"rovers", nlohmann::json::object()}});
  Client a(server.port());
  Client b(server.port());
  CHECK(a.recv()["type"] == "hello");
  CHECK(b.recv()["type"] == "hello");
  const auto sa = a.recv();
  const auto sb = b.recv();
  CHECK(sa["type"] == "snapshot");
  CHECK(sa == sb);

  server.publish({{"sim_time", 2.0}, {"rovers", {{"leo1", {{"x", 1.0}}}}}});
  const auto da = a.recv();
  CHECK(da["type"] == "delta");
  const auto next = ground::apply_delta(sa, da);
  CHECK(next["rovers"]["leo1"]["x"] == 1.0);
  CHECK(next["seq"] == 2);

  // Malformed input gets an error reply and the session stays up.
  a.send("{not json");
  CHECK(a.recv()["type"] == "error");
  a.send(R"({"type":"command","kind":"lights","on":true})");
  a.send(R"({"type":"command","kind":"teleop","v":0.1,"omega":0})");
  server.publish({{"sim_time", 3.0}, {"rovers", nlohmann::json::object()}});
  CHECK(a.recv()["type"] == "delta");
  for (int i = 0; i < 100; ++i) {
    {
      std::lock_guard lock(mu);
      if (inbound.size() >= 2) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  std::lock_guard lock(mu);
  REQUIRE(inbound.size() == 2);
  CHECK(inbound[0].second["kind"] == "lights");
  CHECK(inbound[1].second["kind"] == "teleop");
  CHECK(server.rejected_messages() == 1);
  CHECK(server.session_count() == 2);
}
