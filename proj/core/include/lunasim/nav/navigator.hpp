#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"
#include "lunasim/messages.hpp"
#include "lunasim/nav/planner.hpp"

namespace lunasim::nav {

struct FollowerParams {
  double lookahead = 0.5;
  double cruise_speed = 0.05;
  double v_max = 0.4;
  double omega_max = 2.0;
  double tolerance = 0.3;
  double deviation_limit = 1.0;
  // The pursuit target is pulled back along the path until the straight
  // line to it passes within this distance of every skipped path point.
  double max_chord_deviation = 0.03;
  // Heading error beyond which the rover turns in place.
  double turn_in_place = std::numbers::pi / 2.0;
};

enum class FollowEvent : std::uint8_t { kNone, kGoalReached, kReplanNeeded };

struct DriveCommand {
  double v = 0.0;
  double omega = 0.0;
};

struct FollowOutput {
  DriveCommand cmd;
  FollowEvent event = FollowEvent::kNone;
  double deviation = 0.0;
};

// Pure-pursuit path follower. Progress along the path is monotone: the
// closest-point search only looks forward from the last match.
class Follower {
 public:
  explicit Follower(FollowerParams params = {});

  void set_path(std::vector<Vec2> points, double tolerance);
  void clear();
  bool active() const { return !points_.empty(); }
  const std::vector<Vec2>& points() const { return points_; }
  std::size_t progress() const { return progress_; }
  const FollowerParams& params() const { return params_; }

  FollowOutput step(const Pose2& pose);

 private:
  FollowerParams params_;
  std::vector<Vec2> points_;
  double tolerance_ = 0.3;
  std::size_t progress_ = 0;
};

struct NavigatorParams {
  PlannerParams planner;
  FollowerParams follower;
  // No-progress watchdog: replan when the distance to goal has not shrunk by
  // `stall_distance` within `stall_period`, give up after `max_replans`.
  double stall_period = 30.0;
  double stall_distance = 0.2;
  int max_replans = 3;
};

// Goal handling on the rover's local map (odometry frame). Goals arrive in
// the merged frame and go through the rover's anchor.
class Navigator {
 public:
  using StatusHandler = std::function<void(msg::NavState, const std::string& detail)>;

  explicit Navigator(NavigatorParams params = {});

  void set_status_handler(StatusHandler h) { on_status_ = std::move(h); }
  void set_enabled(bool on);
  bool enabled() const { return enabled_; }
  msg::NavState state() const { return state_; }
  bool has_goal() const { return goal_.has_value(); }
  // Goal in the local frame, when one is active.
  std::optional<Vec2> local_goal() const { return goal_; }
  const Follower& follower() const { return follower_; }
  const std::optional<PlannedPath>& path() const { return path_; }
  std::size_t plans() const { return plans_; }

  // `anchor` maps the local frame into the merged frame.
  msg::NavState set_goal(const msg::NavGoal& goal, const std::optional<Pose2>& anchor,
                         const mapping::OccupancyGrid& grid, const Pose2& pose, double now);
  void cancel();
  // Checks the remaining path against a fresh map and replans when a path
  // cell became blocked.
  void on_map_update(const mapping::OccupancyGrid& grid, const Pose2& pose, double now);
  DriveCommand tick(const mapping::OccupancyGrid& grid, const Pose2& pose, double now);

 private:
  bool replan(const mapping::OccupancyGrid& grid, const Pose2& pose, double now, msg::NavState failure_state);
  void set_state(msg::NavState s, const std::string& detail = {});
  bool path_blocked(const mapping::OccupancyGrid& grid) const;

  NavigatorParams params_;
  Follower follower_;
  StatusHandler on_status_;
  bool enabled_ = true;
  msg::NavState state_ = msg::NavState::kIdle;
  std::optional<Vec2> goal_;
  double tolerance_ = 0.3;
  std::optional<PlannedPath> path_;
  std::size_t plans_ = 0;
  int replans_ = 0;
  double stall_since_ = 0.0;
  double stall_best_ = 0.0;
};

}  // namespace lunasim::nav
