#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lunasim/bytes.hpp"
#include "lunasim/geometry.hpp"

// Payload codecs for the rover, lander and ground-station topics. Every
// payload starts with a one-byte kind tag; decoders throw DecodeError on a
// wrong tag, truncation or trailing bytes. Layouts are in docs/protocol.md.
namespace lunasim::msg {

enum class Kind : std::uint8_t {
  kOdom = 1,
  kStatus = 2,
  kScan = 3,
  kMap = 4,
  kCmdVel = 5,
  kNavGoal = 6,
  kLights = 7,
  kResetOdom = 8,
  kReboot = 9,
  kNavStatus = 10,
  kAnchors = 11,
  kMergedMap = 12,
};

// Topic names under a rover namespace.
inline constexpr std::string_view kOdomTopic = "odom";
inline constexpr std::string_view kStatusTopic = "status";
inline constexpr std::string_view kScanTopic = "scan";
inline constexpr std::string_view kMapTopic = "map";
inline constexpr std::string_view kCmdVelTopic = "cmd_vel";
inline constexpr std::string_view kNavGoalTopic = "nav_goal";
inline constexpr std::string_view kLightsTopic = "lights";
inline constexpr std::string_view kResetOdomTopic = "reset_odom";
inline constexpr std::string_view kRebootTopic = "reboot";
inline constexpr std::string_view kNavStatusTopic = "nav_status";
// Published by the lander.
inline constexpr std::string_view kAnchorsTopic = "anchors";
inline constexpr std::string_view kMergedMapTopic = "merged_map";

inline std::string topic(std::string_view ns, std::string_view name) {
  std::string t(ns);
  t += '/';
  t += name;
  return t;
}

enum class NavState : std::uint8_t {
  kIdle = 0,
  kPlanning = 1,
  kFollowing = 2,
  kGoalReached = 3,
  kNoPath = 4,
  kFrameUnknown = 5,
  kReplan = 6,
  kDisabled = 7,
};

std::string_view to_string(NavState s);

struct Odom {
  double stamp = 0.0;
  Pose2 pose;
  double v = 0.0;
  double omega = 0.0;
  double distance = 0.0;  // since the last odometry reset
};

struct Status {
  double stamp = 0.0;
  std::uint8_t power = 0;  // rover::PowerState
  bool headlights = false;
  bool odometry_degraded = false;
  bool autonomy = true;
  NavState nav = NavState::kIdle;
  std::uint32_t map_version = 0;
};

struct ScanMsg {
  double stamp = 0.0;
  Pose2 pose;  // odometry pose at capture
  double angle_min = 0.0;
  double angle_increment = 0.0;
  double max_range = 0.0;
  std::vector<float> ranges;  // +inf for no return
};

struct MapMsg {
  double stamp = 0.0;
  std::uint32_t version = 0;
  Bytes grid;  // "LGR1" encoding, odometry frame
};

struct CmdVel {
  double v = 0.0;
  double omega = 0.0;
};

struct NavGoal {
  double x = 0.0;  // merged-map frame
  double y = 0.0;
  double tolerance = 0.3;
};

struct Lights {
  bool on = false;
};

struct ResetOdom {
  Pose2 pose;
};

struct Reboot {};

struct NavStatus {
  double stamp = 0.0;
  NavState state = NavState::kIdle;
  double goal_x = 0.0;
  double goal_y = 0.0;
  std::string detail;
};

struct Anchor {
  std::string ns;
  bool anchored = false;
  Pose2 to_global;  // local map frame -> merged frame
  double overlap = 0.0;
};

struct Anchors {
  double stamp = 0.0;
  std::uint32_t version = 0;
  std::vector<Anchor> anchors;
};

struct MergedMapMsg {
  double stamp = 0.0;
  std::uint32_t version = 0;
  Bytes grid;
  std::vector<Anchor> anchors;
};

Bytes encode(const Odom& m);
Bytes encode(const Status& m);
Bytes encode(const ScanMsg& m);
Bytes encode(const MapMsg& m);
Bytes encode(const CmdVel& m);
Bytes encode(const NavGoal& m);
Bytes encode(const Lights& m);
Bytes encode(const ResetOdom& m);
Bytes encode(const Reboot& m);
Bytes encode(const NavStatus& m);
Bytes encode(const Anchors& m);
Bytes encode(const MergedMapMsg& m);

// Kind tag of an encoded payload; throws DecodeError when empty or unknown.
Kind peek_kind(std::span<const std::uint8_t> b);

template <class T>
T decode(std::span<const std::uint8_t> b);

template <> Odom decode<Odom>(std::span<const std::uint8_t> b);
template <> Status decode<Status>(std::span<const std::uint8_t> b);
template <> ScanMsg decode<ScanMsg>(std::span<const std::uint8_t> b);
template <> MapMsg decode<MapMsg>(std::span<const std::uint8_t> b);
template <> CmdVel decode<CmdVel>(std::span<const std::uint8_t> b);
template <> NavGoal decode<NavGoal>(std::span<const std::uint8_t> b);
template <> Lights decode<Lights>(std::span<const std::uint8_t> b);
template <> ResetOdom decode<ResetOdom>(std::span<const std::uint8_t> b);
template <> Reboot decode<Reboot>(std::span<const std::uint8_t> b);
template <> NavStatus decode<NavStatus>(std::span<const std::uint8_t> b);
template <> Anchors decode<Anchors>(std::span<const std::uint8_t> b);
template <> MergedMapMsg decode<MergedMapMsg>(std::span<const std::uint8_t> b);

}  // namespace lunasim::msg
