#include "lunasim/messages.hpp"

#include <limits>

namespace lunasim::msg {

std::string_view to_string(NavState s) {
  switch (s) {
    case NavState::kIdle: return "idle";
    case NavState::kPlanning: return "planning";
    case NavState::kFollowing: return "following";
    case NavState::kGoalReached: return "goal_reached";
    case NavState::kNoPath: return "no_path";
    case NavState::kFrameUnknown: return "frame_unknown";
    case NavState::kReplan: return "replan";
    case NavState::kDisabled: return "disabled";
  }
  return "?";
}

namespace {

ByteWriter start(Kind k) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(k));
  return w;
}

ByteReader open(std::span<const std::uint8_t> b, Kind k) {
  ByteReader r(b);
  if (r.u8() != static_cast<std::uint8_t>(k)) throw DecodeError("wrong message kind");
  return r;
}

void finish(const ByteReader& r) {
  if (!r.done()) throw DecodeError("trailing bytes in message");
}

void put_pose(ByteWriter& w, const Pose2& p) {
  w.f64(p.x);
  w.f64(p.y);
  w.f64(p.theta);
}

Pose2 get_pose(ByteReader& r) {
  Pose2 p;
  p.x = r.f64();
  p.y = r.f64();
  p.theta = r.f64();
  return p;
}

bool get_bool(ByteReader& r) {
  const auto v = r.u8();
  if (v > 1) throw DecodeError("bad boolean");
  return v == 1;
}

void put_blob(ByteWriter& w, const Bytes& b) {
  w.varint(b.size());
  w.raw(b);
}

Bytes get_blob(ByteReader& r) {
  const auto n = r.varint();
  if (n > r.remaining()) throw DecodeError("blob exceeds buffer");
  Bytes out(n);
  for (auto& c : out) c = r.u8();
  return out;
}

void put_anchors(ByteWriter& w, const std::vector<Anchor>& as) {
  w.varint(as.size());
  for (const auto& a : as) {
    w.str(a.ns);
    w.u8(a.anchored ? 1 : 0);
    put_pose(w, a.to_global);
    w.f64(a.overlap);
  }
}

std::vector<Anchor> get_anchors(ByteReader& r) {
  const auto n = r.varint();
  if (n > r.remaining()) throw DecodeError("anchor count exceeds buffer");
  std::vector<Anchor> out(n);
  for (auto& a : out) {
    a.ns = r.str();
    a.anchored = get_bool(r);
    a.to_global = get_pose(r);
    a.overlap = r.f64();
  }
  return out;
}

NavState get_nav(ByteReader& r) {
  const auto v = r.u8();
  if (v > static_cast<std::uint8_t>(NavState::kDisabled)) throw DecodeError("bad nav state");
  return static_cast<NavState>(v);
}

}  // namespace

Kind peek_kind(std::span<const std::uint8_t> b) {
  if (b.empty()) throw DecodeError("empty message");
  if (b[0] < 1 || b[0] > static_cast<std::uint8_t>(Kind::kMergedMap)) throw DecodeError("unknown message kind");
  return static_cast<Kind>(b[0]);
}

Bytes encode(const Odom& m) {
  auto w = start(Kind::kOdom);
  w.f64(m.stamp);
  put_pose(w, m.pose);
  w.f64(m.v);
  w.f64(m.omega);
  w.f64(m.distance);
  return w.take();
}

template <>
Odom decode<Odom>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kOdom);
  Odom m;
  m.stamp = r.f64();
  m.pose = get_pose(r);
  m.v = r.f64();
  m.omega = r.f64();
  m.distance = r.f64();
  finish(r);
  return m;
}

Bytes encode(const Status& m) {
  auto w = start(Kind::kStatus);
  w.f64(m.stamp);
  w.u8(m.power);
  w.u8(m.headlights ? 1 : 0);
  w.u8(m.odometry_degraded ? 1 : 0);
  w.u8(m.autonomy ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.nav));
  w.u32(m.map_version);
  return w.take();
}

template <>
Status decode<Status>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kStatus);
  Status m;
  m.stamp = r.f64();
  m.power = r.u8();
  m.headlights = get_bool(r);
  m.odometry_degraded = get_bool(r);
  m.autonomy = get_bool(r);
  m.nav = get_nav(r);
  m.map_version = r.u32();
  finish(r);
  return m;
}

Bytes encode(const ScanMsg& m) {
  auto w = start(Kind::kScan);
  w.f64(m.stamp);
  put_pose(w, m.pose);
  w.f64(m.angle_min);
  w.f64(m.angle_increment);
  w.f64(m.max_range);
  w.varint(m.ranges.size());
  for (float f : m.ranges) w.u32(std::bit_cast<std::uint32_t>(f));
  return w.take();
}

template <>
ScanMsg decode<ScanMsg>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kScan);
  ScanMsg m;
  m.stamp = r.f64();
  m.pose = get_pose(r);
  m.angle_min = r.f64();
  m.angle_increment = r.f64();
  m.max_range = r.f64();
  const auto n = r.varint();
  if (n > r.remaining() / 4) throw DecodeError("scan length exceeds buffer");
  m.ranges.resize(n);
  for (auto& f : m.ranges) f = std::bit_cast<float>(r.u32());
  finish(r);
  return m;
}

Bytes encode(const MapMsg& m) {
  auto w = start(Kind::kMap);
  w.f64(m.stamp);
  w.u32(m.version);
  put_blob(w, m.grid);
  return w.take();
}

template <>
MapMsg decode<MapMsg>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kMap);
  MapMsg m;
  m.stamp = r.f64();
  m.version = r.u32();
  m.grid = get_blob(r);
  finish(r);
  return m;
}

Bytes encode(const CmdVel& m) {
  auto w = start(Kind::kCmdVel);
  w.f64(m.v);
  w.f64(m.omega);
  return w.take();
}

template <>
CmdVel decode<CmdVel>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kCmdVel);
  CmdVel m;
  m.v = r.f64();
  m.omega = r.f64();
  finish(r);
  return m;
}

Bytes encode(const NavGoal& m) {
  auto w = start(Kind::kNavGoal);
  w.f64(m.x);
  w.f64(m.y);
  w.f64(m.tolerance);
  return w.take();
}

template <>
NavGoal decode<NavGoal>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kNavGoal);
  NavGoal m;
  m.x = r.f64();
  m.y = r.f64();
  m.tolerance = r.f64();
  finish(r);
  return m;
}

Bytes encode(const Lights& m) {
  auto w = start(Kind::kLights);
  w.u8(m.on ? 1 : 0);
  return w.take();
}

template <>
Lights decode<Lights>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kLights);
  Lights m;
  m.on = get_bool(r);
  finish(r);
  return m;
}

Bytes encode(const ResetOdom& m) {
  auto w = start(Kind::kResetOdom);
  put_pose(w, m.pose);
  return w.take();
}

template <>
ResetOdom decode<ResetOdom>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kResetOdom);
  ResetOdom m;
  m.pose = get_pose(r);
  finish(r);
  return m;
}

Bytes encode(const Reboot&) { return start(Kind::kReboot).take(); }

template <>
Reboot decode<Reboot>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kReboot);
  finish(r);
  return {};
}

Bytes encode(const NavStatus& m) {
  auto w = start(Kind::kNavStatus);
  w.f64(m.stamp);
  w.u8(static_cast<std::uint8_t>(m.state));
  w.f64(m.goal_x);
  w.f64(m.goal_y);
  w.str(m.detail);
  return w.take();
}

template <>
NavStatus decode<NavStatus>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kNavStatus);
  NavStatus m;
  m.stamp = r.f64();
  m.state = get_nav(r);
  m.goal_x = r.f64();
  m.goal_y = r.f64();
  m.detail = r.str();
  finish(r);
  return m;
}

Bytes encode(const Anchors& m) {
  auto w = start(Kind::kAnchors);
  w.f64(m.stamp);
  w.u32(m.version);
  put_anchors(w, m.anchors);
  return w.take();
}

template <>
Anchors decode<Anchors>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kAnchors);
  Anchors m;
  m.stamp = r.f64();
  m.version = r.u32();
  m.anchors = get_anchors(r);
  finish(r);
  return m;
}

Bytes encode(const MergedMapMsg& m) {
  auto w = start(Kind::kMergedMap);
  w.f64(m.stamp);
  w.u32(m.version);
  put_blob(w, m.grid);
  put_anchors(w, m.anchors);
  return w.take();
}

template <>
MergedMapMsg decode<MergedMapMsg>(std::span<const std::uint8_t> b) {
  auto r = open(b, Kind::kMergedMap);
  MergedMapMsg m;
  m.stamp = r.f64();
  m.version = r.u32();
  m.grid = get_blob(r);
  m.anchors = get_anchors(r);
  finish(r);
  return m;
}

}  // namespace lunasim::msg
