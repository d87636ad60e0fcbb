#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lunasim/comms/bus.hpp"
#include "lunasim/geometry.hpp"
#include "lunasim/mesh/link_model.hpp"
#include "lunasim/mesh/network.hpp"
#include "lunasim/world/arena.hpp"

namespace lunasim::scenario {

class ScenarioError : public std::runtime_error {
 public:
  // line is 1-based; 0 when the error has no source position.
  ScenarioError(const std::string& what, int line);
  int line() const { return line_; }

 private:
  int line_;
};

struct RoverSpec {
  std::string name;
  Pose2 start;
  double v_max = 0.4;
  double cruise_speed = 0.1;
  bool known_start = true;
  bool headlights = true;
  // Rovers held in reserve stay powered but idle until scripted.
  bool autonomy = true;
};

struct LanderSpec {
  Vec2 position{25.0, 18.0};
  double merge_period_s = 10.0;
  // Feature matching retry period for rovers without a known deployment pose.
  double match_period_s = 60.0;
};

struct GroundLinkSpec {
  double rate_bps = 10e6;
  double one_way_delay_s = 1.0;
  double frame_error = 0.0;
};

struct MissionSpec {
  double control_period_s = 0.2;
  double scan_period_s = 1.0;
  double odom_period_s = 1.0;
  double status_period_s = 1.0;
  double map_period_s = 10.0;
  double metrics_period_s = 60.0;
  double teleop_rate_hz = 10.0;
  double map_resolution_m = 0.1;
};

enum class EventKind : std::uint8_t {
  kBlackout,
  kShutdownRover,
  kDisableAutonomy,
  kRebootRover,
  kScriptGoal,
  kScriptTeleop,
  kResetOdom,
  kLights,
};

std::string_view to_string(EventKind k);

struct TimedEvent {
  double at = 0.0;
  EventKind kind = EventKind::kBlackout;
  int line = 0;
  std::string rover;
  // blackout
  double until = 0.0;
  std::vector<mesh::LinkSelector> links;
  // script_goal, reset_odom
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double tolerance = 0.3;
  // script_teleop
  double v = 0.0;
  double omega = 0.0;
  double duration = 0.0;
  // lights
  bool on = true;
};

struct ScenarioSpec {
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  double duration_s = 3600.0;
  world::ArenaSpec world;
  LanderSpec lander;
  GroundLinkSpec ground;
  std::vector<RoverSpec> rovers;
  mesh::NetParams net;
  mesh::LinkCurve link_curve;
  comms::CommsParams comms;
  MissionSpec mission;
  std::vector<TimedEvent> events;  // sorted by time, stable

  const RoverSpec* rover(std::string_view name) const;
};

// Parses and validates scenario text (YAML). Errors carry the line number
// of the offending node.
ScenarioSpec parse_scenario_text(std::string_view text);
ScenarioSpec parse_scenario(const std::filesystem::path& file);

// Fully defaulted echo of a validated spec, written into the metrics header.
nlohmann::json to_json(const ScenarioSpec& spec);

}  // namespace lunasim::scenario
