#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lunasim/scenario/mission.hpp"
#include "lunasim/scenario/scenario.hpp"
#include "lunasim/scenario/serve.hpp"

using namespace lunasim;
using namespace lunasim::scenario;

namespace {

std::string read_file(const std::string& name) {
  std::ifstream in(std::string(LUNASIM_SCENARIO_DIR) + "/" + name);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Expects a ScenarioError reported on `line`.
void expect_error(const std::string& text, int line, const std::string& fragment) {
  try {
    parse_scenario_text(text);
    FAIL("accepted: " << text);
  } catch (const ScenarioError& e) {
    CHECK(e.line() == line);
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
  }
}

const char* kShort = R"(name: short
seed: 7
duration: 300
world:
  width: 30
  height: 30
  obstacles:
    - {kind: boulder, x: 20.0, y: 20.0, radius: 1.0}
lander:
  position: [15.0, 15.0]
rovers:
  - {name: leo1, start: [13.0, 15.0, 3.14159]}
  - {name: leo2, start: [17.0, 15.0, 0.0]}
mission:
  metrics_period: 30
events:
  - {at: 20, kind: script_goal, rover: leo1, x: 5.0, y: 8.0}
  - {at: 25, kind: script_goal, rover: leo2, x: 25.0, y: 24.0}
  - {at: 100, kind: blackout, until: 140, links: [[lander, ground_station]]}
  - {at: 120, kind: lights, rover: leo2, on: false}
)";

std::string with_events(const std::string& events) {
  const std::string base = kShort;
  return base.substr(0, base.find("events:")) + "events:\n" + events;
}

nlohmann::json summary(const Mission& m) { return nlohmann::json::parse(m.log().lines().back()); }

}  // namespace

TEST_CASE("scenario: bundled scenarios parse") {
  const auto minimal = parse_scenario_text(read_file("minimal.scn"));
  CHECK(minimal.name == "minimal");
  REQUIRE(minimal.rovers.size() == 1);
  CHECK(minimal.rovers[0].v_max == doctest::Approx(0.4));
  CHECK(minimal.ground.one_way_delay_s == doctest::Approx(1.0));

  const auto esric = parse_scenario_text(read_file("esa_esric_final.scn"));
  CHECK(esric.duration_s == doctest::Approx(14400.0));
  CHECK(esric.rovers.size() == 3);
  CHECK(esric.world.width_m == doctest::Approx(50.0));
  CHECK(esric.world.height_m == doctest::Approx(36.0));
  for (std::size_t i = 1; i < esric.events.size(); ++i) CHECK(esric.events[i - 1].at <= esric.events[i].at);
}

TEST_CASE("scenario: errors point at the offending line") {
  expect_error("name: x\nrovers:\n  - {name: leo1, start: [1, 1]}\n  - {name: leo1, start: [2, 2]}\n", 4, "duplicate");
  expect_error("name: x\nspeed: 3\nrovers:\n  - {name: leo1, start: [1, 1]}\n", 2, "speed");
  expect_error("name: x\nrovers:\n  - {name: leo1, start: [1]}\n", 3, "start");
  expect_error("name: x\nrovers:\n  - {name: leo1, start: [99, 1]}\n", 3, "arena");
  expect_error(with_events("  - {at: 10, kind: explode, rover: leo1}\n"), 17, "explode");
  expect_error(with_events("  - {at: 10, kind: script_goal, rover: leo7, x: 1, y: 1}\n"), 17, "leo7");
  expect_error(with_events("  - {at: 400, kind: lights, rover: leo1, on: true}\n"), 17, "");
  expect_error(with_events("  - {at: 290, kind: script_teleop, rover: leo1, v: 0.1, omega: 0, duration: 20}\n"), 17,
               "");
  expect_error(with_events("  - {at: 10, kind: blackout, until: 5, links: [[lander, ground_station]]}\n"), 17, "");
  expect_error(with_events("  - {at: 10, kind: blackout, until: 50, links: [[lander, moon]]}\n"), 17, "moon");
  // Syntax errors carry the position where the YAML parser gave up.
  expect_error("name: [\n", 2, "");
}

TEST_CASE("scenario: the echo parses back to the same spec") {
  for (const auto* text : {kShort}) {
    const auto a = parse_scenario_text(text);
    const auto echo = to_json(a);
    const auto b = parse_scenario_text(echo.dump());
    CHECK(to_json(b) == echo);
  }
  const auto esric = parse_scenario_text(read_file("esa_esric_final.scn"));
  CHECK(to_json(parse_scenario_text(to_json(esric).dump())) == to_json(esric));
}

TEST_CASE("mission: same scenario and seed give the same log") {
  Mission a(kShort);
  a.run();
  Mission b(kShort);
  b.run();
  CHECK(a.log().lines() == b.log().lines());
  CHECK(a.log().checksum() == b.log().checksum());

  Mission c(kShort, {.seed = 8});
  c.run();
  CHECK(c.log().checksum() != a.log().checksum());
  CHECK(nlohmann::json::parse(c.log().lines().front())["seed"] == 8);
}

TEST_CASE("mission: log structure and counters") {
  Mission m(kShort);
  m.run();
  const auto& lines = m.log().lines();
  // header, samples at 30..300 s, blackout start/end, 2 goals, lights, summary
  REQUIRE(lines.size() == 17);
  const auto head = nlohmann::json::parse(lines.front());
  CHECK(head["type"] == "header");
  CHECK(head["version"] == kArtifactVersion);
  CHECK(head["scenario_text"] == kShort);
  const auto s = summary(m);
  CHECK(s["type"] == "summary");
  CHECK(s["lines"] == lines.size() - 1);
  const std::vector<std::string> before(lines.begin(), lines.end() - 1);
  CHECK(s["checksum"] == checksum_hex(checksum_of(before)));
  CHECK(s["events_fired"] == 5);

  // Every wire byte is charged to exactly one namespace account.
  std::uint64_t sum = 0;
  for (const auto& [ns, b] : s["ns_bytes"].items()) sum += b.get<std::uint64_t>();
  CHECK(sum == s["wire"]["bytes"].get<std::uint64_t>());
  CHECK(s["wire"]["bytes"] == s["wire"]["data_bytes"].get<std::uint64_t>() + s["wire"]["control_bytes"].get<std::uint64_t>());

  CHECK(s["rovers"]["leo1"]["nav"] == "goal_reached");
  CHECK(s["rovers"]["leo1"]["travelled_mm"].get<std::int64_t>() > 8000);
  // The lights command falls inside the blackout: leo2 has dropped out of
  // discovery, so the station does not send it.
  CHECK(m.rover("leo2").plant().headlights());
  bool lights_seen = false;
  for (const auto& l : lines) {
    const auto j = nlohmann::json::parse(l);
    if (j["type"] == "event" && j["kind"] == "lights") {
      lights_seen = true;
      CHECK(j["sent"] == false);
    }
  }
  CHECK(lights_seen);
  CHECK(s["coverage_fraction"].get<double>() > 0.0);
  CHECK(s["coverage_fraction"].get<double>() < 1.0);
  // Telemetry crosses the 1 s ground link; blackout buffering raises the max.
  const double mean = s["gs"]["latency_us_sum"].get<double>() / s["gs"]["delivered"].get<double>();
  CHECK(mean >= 1.0e6);
  CHECK(s["gs"]["latency_us_max"].get<std::uint64_t>() > 20'000'000u);
}

TEST_CASE("mission: rovers shut down at the start map nothing") {
  Mission m(with_events("  - {at: 0, kind: shutdown_rover, rover: leo1}\n  - {at: 0, kind: shutdown_rover, rover: leo2}\n"));
  m.run();
  const auto s = summary(m);
  CHECK(s["coverage"]["known_free"] == 0);
  CHECK(s["rovers"]["leo1"]["power"] == "off");
  CHECK(s["rovers"]["leo1"]["travelled_mm"] == 0);
}

TEST_CASE("mission: monitoring does not change the run") {
  Mission a(kShort, {.bandwidth_monitor = true});
  a.run();
  Mission b(kShort, {.bandwidth_monitor = false});
  b.run();
  CHECK(summary(a)["wire"] == summary(b)["wire"]);
  CHECK(summary(a)["coverage"] == summary(b)["coverage"]);
}

TEST_CASE("mission: scripted teleop drives a rover whose autonomy is off") {
  Mission m(with_events("  - {at: 10, kind: disable_autonomy, rover: leo2}\n"
                        "  - {at: 20, kind: script_teleop, rover: leo2, v: 0.1, omega: 0.0, duration: 30}\n"));
  m.run();
  const auto s = summary(m);
  CHECK(s["rovers"]["leo2"]["autonomy"] == false);
  CHECK(s["rovers"]["leo2"]["nav"] == "disabled");
  CHECK(s["script"]["commands_sent"] == 300);
  CHECK(s["script"]["commands_held"] == 0);
  // 30 s at 0.1 m/s, plus at most the deadman hold after the last command.
  const auto mm = s["rovers"]["leo2"]["travelled_mm"].get<std::int64_t>();
  CHECK(mm >= 2900);
  CHECK(mm <= 3100);
}

TEST_CASE("mission: teleop during a blackout is held at the ground station") {
  Mission m(with_events("  - {at: 50, kind: blackout, until: 150, links: [[lander, ground_station]]}\n"
                        "  - {at: 60, kind: disable_autonomy, rover: leo2}\n"
                        "  - {at: 80, kind: script_teleop, rover: leo2, v: 0.1, omega: 0.0, duration: 20}\n"));
  m.run();
  const auto s = summary(m);
  CHECK(s["script"]["commands_sent"] == 0);
  CHECK(s["script"]["commands_held"] == 200);
  CHECK(s["rovers"]["leo2"]["travelled_mm"] == 0);
}

TEST_CASE("mission: a rover with unknown start is anchored by map matching") {
  const std::string text = R"(name: unknown_start
seed: 3
duration: 900
world:
  width: 30
  height: 30
  obstacles:
    - {kind: boulder, x: 9.0, y: 10.5, radius: 0.8}
    - {kind: boulder, x: 7.0, y: 19.0, radius: 0.6}
    - {kind: crater, x: 5.0, y: 15.0, radius: 1.5, rim_width: 0.3}
    - {kind: boulder, x: 12.0, y: 21.0, radius: 0.7}
    - {kind: boulder, x: 4.0, y: 10.0, radius: 0.5}
    - {kind: boulder, x: 11.0, y: 17.5, radius: 0.4}
    - {kind: boulder, x: 6.5, y: 8.0, radius: 0.6}
    - {kind: boulder, x: 2.5, y: 17.0, radius: 0.5}
    - {kind: boulder, x: 12.0, y: 9.0, radius: 0.5}
    - {kind: boulder, x: 9.0, y: 16.0, radius: 0.3}
lander:
  position: [15.0, 15.0]
  match_period: 30
rovers:
  - {name: leo1, start: [13.0, 15.0, 3.14159]}
  - {name: leo2, start: [13.0, 13.0, 3.14159], known_start: false}
events:
  - {at: 10, kind: script_goal, rover: leo1, x: 6.0, y: 11.0}
  # Goals are in the merged frame, so leo2 is driven by hand until the
  # lander has placed its map.
  - {at: 15, kind: script_teleop, rover: leo2, v: 0.1, omega: 0.0, duration: 60}
  - {at: 400, kind: script_goal, rover: leo2, x: 10.0, y: 13.0}
)";
  Mission m(text);
  m.run();
  const auto& st = m.lander().rovers().at("leo2");
  CHECK(st.match_attempts >= 1);
  REQUIRE(st.anchor.has_value());
  // The anchor maps leo2's odometry frame onto the arena: its true start.
  const Pose2 start{13.0, 13.0, 3.14159};
  const Pose2 odom0 = Pose2{};
  const Vec2 mapped = st.anchor->apply(odom0.position());
  CHECK(std::hypot(mapped.x - start.x, mapped.y - start.y) < 0.5);
  CHECK(std::abs(wrap_angle(st.anchor->theta - start.theta)) < 0.1);
  CHECK(m.lander().rovers().at("leo1").anchor->x == 0.0);
  CHECK(m.rover("leo2").navigator().state() == msg::NavState::kGoalReached);
  const auto p = m.rover("leo2").plant().true_pose();
  CHECK(std::hypot(p.x - 10.0, p.y - 13.0) < 0.6);
}

TEST_CASE("replay: untouched log is identical, edits diverge, other versions are refused") {
  Mission m(kShort);
  m.run();
  auto lines = m.log().lines();
  const auto ok = replay(lines);
  CHECK(ok.status == ReplayVerdict::Status::kIdentical);

  auto edited = lines;
  auto& victim = edited[5];
  const auto pos = victim.find_first_of("0123456789");
  REQUIRE(pos != std::string::npos);
  victim[pos] = victim[pos] == '9' ? '8' : static_cast<char>(victim[pos] + 1);
  const auto bad = replay(edited);
  CHECK(bad.status == ReplayVerdict::Status::kDiverged);
  CHECK(bad.line == 6);
  CHECK(bad.expected == edited[5]);
  CHECK(bad.actual == lines[5]);

  auto truncated = lines;
  truncated.pop_back();
  const auto cut = replay(truncated);
  CHECK(cut.status == ReplayVerdict::Status::kDiverged);
  CHECK(cut.line == lines.size());

  auto other = lines;
  auto head = nlohmann::json::parse(other.front());
  head["version"] = "lunasim-0.0.9";
  other.front() = head.dump();
  const auto refused = replay(other);
  CHECK(refused.status == ReplayVerdict::Status::kRefused);
  CHECK(refused.message.find("lunasim-0.0.9") != std::string::npos);

  CHECK(replay({}).status == ReplayVerdict::Status::kRefused);
  CHECK(replay({"{not json"}).status == ReplayVerdict::Status::kDiverged);
}

TEST_CASE("live control: input queued while paused applies in order after resume") {
  Mission m(kShort);
  m.start();
  LiveControl control(m, 10.0, true);
  m.advance_to(30.0);  // discovery has run; the station can select leo2

  ground::ClientMessage sel;
  sel.type = ground::ClientType::kSelect;
  sel.select = "leo2";
  ground::ClientMessage off;
  off.type = ground::ClientType::kCommand;
  off.command.kind = ground::CommandKind::kLights;
  off.command.lights = false;
  ground::ClientMessage on = off;
  on.command.lights = true;
  ground::ClientMessage rate;
  rate.type = ground::ClientType::kSetRate;
  rate.realtime_factor = 40.0;

  control.handle(sel);
  control.handle(off);
  control.handle(on);
  control.handle(off);
  control.handle(rate);
  CHECK(control.paused());
  CHECK(control.realtime_factor() == 40.0);
  CHECK(control.queued() == 4);
  CHECK(m.rover("leo2").counters().lights == 0);

  ground::ClientMessage resume;
  resume.type = ground::ClientType::kResume;
  control.handle(resume);
  CHECK_FALSE(control.paused());
  m.kernel().drain_ingress();
  m.advance_to(40.0);
  CHECK(m.rover("leo2").counters().lights == 3);
  CHECK_FALSE(m.rover("leo2").plant().headlights());
  CHECK(m.ground().selection().selected == std::optional<std::string>("leo2"));
}
