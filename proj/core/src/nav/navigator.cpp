#include "lunasim/nav/navigator.hpp"

#include <algorithm>
#include <cmath>

namespace lunasim::nav {

Follower::Follower(FollowerParams params) : params_(params) {}

void Follower::set_path(std::vector<Vec2> points, double tolerance) {
  points_ = std::move(points);
  tolerance_ = tolerance;
  progress_ = 0;
}

void Follower::clear() {
  points_.clear();
  progress_ = 0;
}

FollowOutput Follower::step(const Pose2& pose) {
  FollowOutput out;
  if (points_.empty()) return out;
  const Vec2 p = pose.position();
  if (distance(p, points_.back()) <= tolerance_) {
    clear();
    out.event = FollowEvent::kGoalReached;
    return out;
  }
  // Forward-only closest point search over the next few metres of path.
  constexpr std::size_t kWindow = 40;
  const std::size_t end = std::min(points_.size(), progress_ + kWindow);
  double best = distance(p, points_[progress_]);
  for (std::size_t i = progress_ + 1; i < end; ++i) {
    const double d = distance(p, points_[i]);
    if (d < best) {
      best = d;
      progress_ = i;
    }
  }
  out.deviation = best;
  if (best > params_.deviation_limit) {
    out.event = FollowEvent::kReplanNeeded;
    return out;
  }
  // Lookahead point, pulled back to the last one whose chord from the rover
  // stays near every path point it skips, so corners are not cut.
  auto chord_ok = [&](std::size_t j) {
    const Vec2 d = points_[j] - p;
    const double len2 = d.dot(d);
    for (std::size_t k = progress_; k < j; ++k) {
      const Vec2 q = points_[k] - p;
      const double u = len2 > 0.0 ? std::clamp(q.dot(d) / len2, 0.0, 1.0) : 0.0;
      if (distance(points_[k], p + d * u) > params_.max_chord_deviation) return false;
    }
    return true;
  };
  std::size_t target_i = points_.size() - 1;
  for (std::size_t i = progress_; i < points_.size(); ++i) {
    if (distance(p, points_[i]) >= params_.lookahead) {
      target_i = i;
      break;
    }
  }
  while (target_i > progress_ + 1 && !chord_ok(target_i)) --target_i;
  const Vec2 target = points_[target_i];
  const Vec2 rel = rotate(target - p, -pose.theta);
  const double alpha = std::atan2(rel.y, rel.x);
  if (std::abs(alpha) > params_.turn_in_place) {
    out.cmd.omega = std::clamp(2.0 * alpha, -params_.omega_max, params_.omega_max);
    return out;
  }
  const double ld2 = rel.dot(rel);
  const double kappa = ld2 > 0.0 ? 2.0 * rel.y / ld2 : 0.0;
  double v = std::min(params_.cruise_speed, params_.v_max);
  double omega = kappa * v;
  if (std::abs(omega) > params_.omega_max) {
    omega = std::copysign(params_.omega_max, omega);
    v = params_.omega_max / std::abs(kappa);
  }
  out.cmd = {v, omega};
  return out;
}

Navigator::Navigator(NavigatorParams params) : params_(params), follower_(params.follower) {}

void Navigator::set_state(msg::NavState s, const std::string& detail) {
  state_ = s;
  if (on_status_) on_status_(s, detail);
}

void Navigator::set_enabled(bool on) {
  if (on == enabled_) return;
  enabled_ = on;
  goal_.reset();
  path_.reset();
  follower_.clear();
  set_state(on ? msg::NavState::kIdle : msg::NavState::kDisabled);
}

void Navigator::cancel() {
  goal_.reset();
  path_.reset();
  follower_.clear();
  if (enabled_) set_state(msg::NavState::kIdle, "cancelled");
}

msg::NavState Navigator::set_goal(const msg::NavGoal& goal, const std::optional<Pose2>& anchor,
                                  const mapping::OccupancyGrid& grid, const Pose2& pose, double now) {
  if (!enabled_) {
    set_state(msg::NavState::kDisabled, "autonomy disabled");
    return state_;
  }
  if (!anchor) {
    goal_.reset();
    path_.reset();
    follower_.clear();
    set_state(msg::NavState::kFrameUnknown, "map not anchored");
    return state_;
  }
  goal_ = anchor->inverse().apply({goal.x, goal.y});
  tolerance_ = goal.tolerance;
  replans_ = 0;
  set_state(msg::NavState::kPlanning);
  replan(grid, pose, now, msg::NavState::kNoPath);
  return state_;
}

bool Navigator::replan(const mapping::OccupancyGrid& grid, const Pose2& pose, double now,
                       msg::NavState failure_state) {
  ++plans_;
  mapping::OccupancyGrid work = grid;
  work.ensure_contains(pose.position(), 1.0);
  work.ensure_contains(*goal_, 1.0);
  const CostMap costs(work, params_.planner);
  const auto s = *work.cell_of(pose.position());
  const auto t = *work.cell_of(*goal_);
  CellIndex from = s;
  if (costs.blocked(s.x, s.y)) {
    // Inside an inflated obstacle (map noise or a close pass): start from
    // the nearest open cell within half a metre.
    const int reach = static_cast<int>(std::ceil(0.5 / work.resolution()));
    double best = std::numeric_limits<double>::infinity();
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const double d = std::hypot(dx, dy);
        if (d < best && !costs.blocked(s.x + dx, s.y + dy)) {
          best = d;
          from = {s.x + dx, s.y + dy};
        }
      }
    }
  }
  auto r = plan(costs, from, t, work.resolution());
  stall_since_ = now;
  stall_best_ = distance(pose.position(), *goal_);
  if (!r.ok()) {
    goal_.reset();
    path_.reset();
    follower_.clear();
    set_state(failure_state, std::string(to_string(r.status)));
    return false;
  }
  r.path.planned_at = now;
  auto pts = path_points(work, r.path);
  if (!(from == s)) pts.insert(pts.begin(), work.cell_center(s.x, s.y));
  follower_.set_path(std::move(pts), tolerance_);
  path_ = std::move(r.path);
  set_state(msg::NavState::kFollowing);
  return true;
}

bool Navigator::path_blocked(const mapping::OccupancyGrid& grid) const {
  const auto& pts = follower_.points();
  const double r_cells = params_.planner.inflation_radius / grid.resolution();
  const int reach = static_cast<int>(std::ceil(r_cells + 0.5));
  // The first few cells may sit in inflation around the rover itself.
  for (std::size_t i = follower_.progress() + 3; i < pts.size(); ++i) {
    const auto c = grid.cell_of_unbounded(pts[i]);
    for (int dy = -reach; dy <= reach; ++dy) {
      for (int dx = -reach; dx <= reach; ++dx) {
        const double ex = std::max(std::abs(dx) - 0.5, 0.0);
        const double ey = std::max(std::abs(dy) - 0.5, 0.0);
        if (ex * ex + ey * ey >= r_cells * r_cells) continue;
        if (grid.value_or_prior(c.x + dx, c.y + dy) >= params_.planner.occupied_threshold) return true;
      }
    }
  }
  return false;
}

void Navigator::on_map_update(const mapping::OccupancyGrid& grid, const Pose2& pose, double now) {
  if (!enabled_ || !goal_ || state_ != msg::NavState::kFollowing) return;
  if (!path_blocked(grid)) return;
  set_state(msg::NavState::kReplan, "path blocked");
  replan(grid, pose, now, msg::NavState::kNoPath);
}

DriveCommand Navigator::tick(const mapping::OccupancyGrid& grid, const Pose2& pose, double now) {
  if (!enabled_ || !goal_ || state_ != msg::NavState::kFollowing) return {};
  const auto out = follower_.step(pose);
  if (out.event == FollowEvent::kGoalReached) {
    goal_.reset();
    path_.reset();
    set_state(msg::NavState::kGoalReached);
    return {};
  }
  if (out.event == FollowEvent::kReplanNeeded) {
    set_state(msg::NavState::kReplan, "off path");
    replan(grid, pose, now, msg::NavState::kNoPath);
    return {};
  }
  const double d = distance(pose.position(), *goal_);
  if (d < stall_best_ - params_.stall_distance) {
    stall_best_ = d;
    stall_since_ = now;
  } else if (now - stall_since_ > params_.stall_period) {
    if (++replans_ > params_.max_replans) {
      goal_.reset();
      path_.reset();
      follower_.clear();
      set_state(msg::NavState::kNoPath, "stalled");
      return {};
    }
    set_state(msg::NavState::kReplan, "stalled");
    replan(grid, pose, now, msg::NavState::kNoPath);
    return {};
  }
  return out.cmd;
}

}  // namespace lunasim::nav
