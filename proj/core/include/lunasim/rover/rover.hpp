#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/scan.hpp"
#include "lunasim/sim/rng.hpp"
#include "lunasim/world/arena.hpp"

namespace lunasim::rover {

class RoverError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Twist {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s
  bool operator==(const Twist&) const = default;
};

struct OdometryModel {
  double drift_rate = 0.02;      // error per metre travelled
  double speed_knee = 0.05;      // m/s; above it the rate doubles
  double loss_threshold = 1.0;   // m of accumulated drift before odometry_degraded
};

struct ScanConfig {
  int beams = 360;
  double max_range = 8.0;
  double range_noise_sigma = 0.02;
  double dark_factor = 0.5;  // range multiplier with headlights off
};

struct RoverConfig {
  std::string name;
  Pose2 start;
  double v_max = 0.4;
  double omega_max = 2.0;
  // Collision body. The planner inflates obstacles by 0.25 m, leaving
  // some slack for tracking error.
  double footprint_radius = 0.2;
  double reboot_duration = 30.0;
  // When set the odometric frame starts aligned with the arena (the rover
  // is told its start pose); otherwise odometry starts at the origin.
  bool known_start = true;
  OdometryModel odometry;
  ScanConfig scan;
};

enum class PowerState : std::uint8_t { kOn, kRebooting, kOff };
std::string_view to_string(PowerState s);

enum class DriveResult : std::uint8_t { kApplied, kDroppedUnpowered, kBlocked };

// Differential-drive plant. Odometry is the true pose seen through the
// odometric frame plus a drift vector that grows along a fixed random
// direction by rate * distance, so |odom - true| is monotone between
// resets and bounded by rate * distance travelled.
class Rover {
 public:
  Rover(RoverConfig config, sim::RngStream rng);

  const std::string& name() const { return config_.name; }
  const RoverConfig& config() const { return config_; }

  const Pose2& true_pose() const { return true_pose_; }
  Pose2 odom_pose() const;
  // Pose of the odometric frame in the arena.
  const Pose2& odom_frame() const { return odom_frame_; }
  const Twist& twist() const { return twist_; }
  bool headlights() const { return headlights_; }
  bool powered() const { return power_ == PowerState::kOn; }
  PowerState power_state() const { return power_; }
  double distance_travelled() const { return travelled_; }
  double distance_since_reset() const { return travelled_since_reset_; }

  double odometry_error() const { return drift_.norm(); }
  bool odometry_degraded() const { return odometry_error() > config_.odometry.loss_threshold; }

  // Optional collision world; motion that would put the footprint into an
  // occupied cell is refused.
  void set_collision_world(const world::GroundTruthGrid* truth) { truth_ = truth; }

  // Commands are clamped to v_max and omega_max.
  DriveResult apply_drive(Twist cmd, double dt);

  double effective_max_range() const;
  mapping::Scan sense_scan(const world::GroundTruthGrid& truth);

  // Throws RoverError when unpowered.
  void reset_odometry(const Pose2& known);
  // Ignored unless powered; returns whether the state was applied.
  bool set_headlights(bool on);
  // Starts a reboot at `now`; the rover is silent until now + duration.
  bool reboot(double now);
  void shutdown();
  // Completes a pending reboot once `now` reaches its end.
  void update_power(double now);
  double reboot_ends_at() const { return reboot_until_; }

 private:
  void new_drift_epoch();

  RoverConfig config_;
  sim::RngStream rng_;
  const world::GroundTruthGrid* truth_ = nullptr;

  Pose2 true_pose_;
  Pose2 odom_frame_;
  Vec2 drift_;
  Vec2 drift_dir_{1.0, 0.0};
  double drift_scale_ = 1.0;
  Twist twist_;
  bool headlights_ = true;
  PowerState power_ = PowerState::kOn;
  double reboot_until_ = 0.0;
  double travelled_ = 0.0;
  double travelled_since_reset_ = 0.0;
};

// Zeroes the command once no fresh teleop input has arrived for `timeout`.
class TeleopDeadman {
 public:
  explicit TeleopDeadman(double timeout = 0.5) : timeout_(timeout) {}
  void accept(Twist cmd, double now) {
    cmd_ = cmd;
    stamp_ = now;
    armed_ = true;
  }
  Twist current(double now) const {
    if (!armed_ || now - stamp_ > timeout_) return {};
    return cmd_;
  }
  bool active(double now) const { return armed_ && now - stamp_ <= timeout_; }
  void clear() { armed_ = false; }

 private:
  double timeout_;
  Twist cmd_;
  double stamp_ = 0.0;
  bool armed_ = false;
};

}  // namespace lunasim::rover
