#include "lunasim/rover/rover.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lunasim::rover {

std::string_view to_string(PowerState s) {
  switch (s) {
    case PowerState::kOn: return "on";
    case PowerState::kRebooting: return "rebooting";
    case PowerState::kOff: return "off";
  }
  return "?";
}

Rover::Rover(RoverConfig config, sim::RngStream rng)
    : config_(std::move(config)), rng_(std::move(rng)), true_pose_(config_.start) {
  if (config_.scan.beams < 8) throw RoverError("scan needs at least 8 beams");
  if (!(config_.scan.max_range > 0.0)) throw RoverError("scan max_range must be positive");
  if (config_.odometry.drift_rate < 0.0) throw RoverError("drift_rate must be non-negative");
  odom_frame_ = config_.known_start ? Pose2{} : config_.start;
  new_drift_epoch();
}

void Rover::new_drift_epoch() {
  const double a = rng_.uniform(-std::numbers::pi, std::numbers::pi);
  drift_dir_ = {std::cos(a), std::sin(a)};
  drift_scale_ = rng_.uniform(0.5, 1.0);
}

Pose2 Rover::odom_pose() const {
  Pose2 p = odom_frame_.inverse().compose(true_pose_);
  p.x += drift_.x;
  p.y += drift_.y;
  return p;
}

namespace {

Pose2 integrate(const Pose2& p, double v, double omega, double dt) {
  if (std::abs(omega) < 1e-12) {
    return {p.x + v * dt * std::cos(p.theta), p.y + v * dt * std::sin(p.theta), p.theta};
  }
  const double th = p.theta + omega * dt;
  const double r = v / omega;
  return {p.x + r * (std::sin(th) - std::sin(p.theta)), p.y - r * (std::cos(th) - std::cos(p.theta)),
          wrap_angle(th)};
}

}  // namespace

DriveResult Rover::apply_drive(Twist cmd, double dt) {
  if (!powered()) {
    twist_ = {};
    return DriveResult::kDroppedUnpowered;
  }
  cmd.v = std::clamp(cmd.v, -config_.v_max, config_.v_max);
  cmd.omega = std::clamp(cmd.omega, -config_.omega_max, config_.omega_max);
  if (dt <= 0.0) {
    twist_ = cmd;
    return DriveResult::kApplied;
  }

  // Sub-steps keep collision checks finer than the footprint.
  const double step_len = std::abs(cmd.v) * dt;
  const int steps = std::max(1, static_cast<int>(std::ceil(step_len / 0.05)));
  const double h = dt / steps;
  Pose2 p = true_pose_;
  for (int i = 0; i < steps; ++i) {
    const Pose2 next = integrate(p, cmd.v, cmd.omega, h);
    if (truth_ != nullptr && std::abs(cmd.v) > 0.0 &&
        !truth_->footprint_free(next.position(), config_.footprint_radius)) {
      twist_ = {};
      const double moved = std::abs(cmd.v) * h * i;
      travelled_ += moved;
      travelled_since_reset_ += moved;
      const double rate = config_.odometry.drift_rate *
                          (std::abs(cmd.v) > config_.odometry.speed_knee ? 2.0 : 1.0);
      drift_ = drift_ + drift_dir_ * (drift_scale_ * rate * moved);
      true_pose_ = p;
      return DriveResult::kBlocked;
    }
    p = next;
  }
  const double ds = std::abs(cmd.v) * dt;
  const double rate = config_.odometry.drift_rate *
                      (std::abs(cmd.v) > config_.odometry.speed_knee ? 2.0 : 1.0);
  drift_ = drift_ + drift_dir_ * (drift_scale_ * rate * ds);
  travelled_ += ds;
  travelled_since_reset_ += ds;
  true_pose_ = p;
  twist_ = cmd;
  return DriveResult::kApplied;
}

double Rover::effective_max_range() const {
  return config_.scan.max_range * (headlights_ ? 1.0 : config_.scan.dark_factor);
}

mapping::Scan Rover::sense_scan(const world::GroundTruthGrid& truth) {
  if (!powered()) throw RoverError("sense_scan on an unpowered rover");
  mapping::Scan s;
  const int n = config_.scan.beams;
  s.angle_min = -std::numbers::pi;
  s.angle_increment = 2.0 * std::numbers::pi / n;
  s.max_range = effective_max_range();
  s.ranges.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double bearing = true_pose_.theta + s.angle_min + i * s.angle_increment;
    const auto d = world::raycast(truth, true_pose_.position(), bearing, s.max_range);
    double r = mapping::Scan::kNoReturn;
    if (d) {
      r = *d;
      if (config_.scan.range_noise_sigma > 0.0) r += rng_.normal(0.0, config_.scan.range_noise_sigma);
      r = std::clamp(r, 0.0, s.max_range);
    }
    s.ranges[static_cast<std::size_t>(i)] = r;
  }
  return s;
}

void Rover::reset_odometry(const Pose2& known) {
  if (!powered()) throw RoverError("reset_odometry on an unpowered rover");
  odom_frame_ = true_pose_.compose(known.inverse());
  drift_ = {};
  travelled_since_reset_ = 0.0;
  new_drift_epoch();
}

bool Rover::set_headlights(bool on) {
  if (!powered()) return false;
  headlights_ = on;
  return true;
}

bool Rover::reboot(double now) {
  if (!powered()) return false;
  power_ = PowerState::kRebooting;
  reboot_until_ = now + config_.reboot_duration;
  twist_ = {};
  return true;
}

void Rover::shutdown() {
  power_ = PowerState::kOff;
  twist_ = {};
}

void Rover::update_power(double now) {
  if (power_ == PowerState::kRebooting && now >= reboot_until_) power_ = PowerState::kOn;
}

}  // namespace lunasim::rover
