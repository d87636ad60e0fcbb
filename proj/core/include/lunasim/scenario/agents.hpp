#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lunasim/comms/bus.hpp"
#include "lunasim/mapping/merge.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"
#include "lunasim/mapping/scan_integrator.hpp"
#include "lunasim/messages.hpp"
#include "lunasim/nav/navigator.hpp"
#include "lunasim/rover/rover.hpp"
#include "lunasim/scenario/scenario.hpp"
#include "lunasim/sim/kernel.hpp"
#include "lunasim/world/arena.hpp"

namespace lunasim::scenario {

struct RoverCounters {
  std::uint64_t cmd_vel = 0;
  std::uint64_t lights = 0;
  std::uint64_t nav_goals = 0;
  std::uint64_t resets = 0;
  std::uint64_t reboots = 0;
  std::uint64_t blocked_steps = 0;
};

// Onboard software of one rover: control loop, mapping in the odometry
// frame, navigation, telemetry and command endpoints.
class RoverAgent {
 public:
  RoverAgent(sim::Kernel& kernel, comms::CommsBus& bus, mesh::NodeIndex node, const world::GroundTruthGrid& truth,
             const RoverSpec& spec, const MissionSpec& mission);

  void start();

  const std::string& name() const { return spec_.name; }
  mesh::NodeIndex node() const { return node_; }
  const rover::Rover& plant() const { return rover_; }
  const mapping::OccupancyGrid& map() const { return map_; }
  std::uint32_t map_version() const { return map_version_; }
  const nav::Navigator& navigator() const { return nav_; }
  const std::optional<Pose2>& anchor() const { return anchor_; }
  bool autonomy() const { return nav_.enabled(); }
  bool teleop_active() const { return deadman_.active(kernel_.now_seconds()); }
  const RoverCounters& counters() const { return counters_; }

  // Fault injection, applied directly to the plant.
  void shutdown();
  void disable_autonomy();

 private:
  using Loop = void (RoverAgent::*)();
  double now() const { return kernel_.now_seconds(); }
  void periodic(double period, Loop fn);
  void control_tick();
  void scan_tick();
  void publish_odom();
  void publish_status();
  void publish_map();
  void sync_power();

  sim::Kernel& kernel_;
  comms::CommsBus& bus_;
  mesh::NodeIndex node_;
  const world::GroundTruthGrid& truth_;
  RoverSpec spec_;
  MissionSpec mission_;
  sim::HandlerId handler_;
  rover::Rover rover_;
  rover::TeleopDeadman deadman_;
  mapping::OccupancyGrid map_;
  mapping::ScanIntegrator integrator_;
  nav::Navigator nav_;
  std::optional<Pose2> anchor_;
  std::uint32_t map_version_ = 0;
  bool map_dirty_ = false;
  bool was_powered_ = true;
  RoverCounters counters_;
};

struct LanderRoverState {
  std::optional<mapping::OccupancyGrid> map;
  std::uint32_t version = 0;
  bool known_start = true;
  std::optional<Pose2> anchor;
  mapping::MergeStatus last_match = mapping::MergeStatus::kNoConsensus;
  std::uint64_t match_attempts = 0;
  double next_match_at = 0.0;
};

// Lander-side merging. Rovers with a known deployment pose map in the arena
// frame and are anchored with the identity; the others are registered by
// feature matching against the merged map.
class LanderAgent {
 public:
  LanderAgent(sim::Kernel& kernel, comms::CommsBus& bus, mesh::NodeIndex node, const ScenarioSpec& spec);

  void start();
  void merge_now();

  const mapping::OccupancyGrid& merged() const { return merged_; }
  std::uint32_t merged_version() const { return version_; }
  const std::map<std::string, LanderRoverState>& rovers() const { return rovers_; }

 private:
  void on_map(const comms::Envelope& env);
  void merge_tick();

  sim::Kernel& kernel_;
  comms::CommsBus& bus_;
  mesh::NodeIndex node_;
  double period_;
  double match_period_;
  sim::HandlerId handler_;
  mapping::OccupancyGrid base_;
  mapping::OccupancyGrid merged_;
  std::uint32_t version_ = 0;
  std::map<std::string, LanderRoverState> rovers_;
};

}  // namespace lunasim::scenario
