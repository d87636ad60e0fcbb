#include <cmath>
#include <limits>

#include "doctest.h"
#include "lunasim/messages.hpp"
#include "lunasim/sim/rng.hpp"

using namespace lunasim;

namespace {

template <class T>
void check_truncations(const Bytes& full) {
  for (std::size_t n = 0; n < full.size(); ++n) {
    Bytes cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK_THROWS_AS(msg::decode<T>(cut), DecodeError);
  }
  Bytes longer = full;
  longer.push_back(0);
  CHECK_THROWS_AS(msg::decode<T>(longer), DecodeError);
}

}  // namespace

TEST_CASE("messages: odom and status round trip") {
  msg::Odom o{12.5, {1.0, -2.0, 0.3}, 0.05, -0.1, 7.25};
  const auto b = msg::encode(o);
  CHECK(b.size() == 1 + 8 * 7);
  CHECK(msg::peek_kind(b) == msg::Kind::kOdom);
  const auto d = msg::decode<msg::Odom>(b);
  CHECK(d.stamp == o.stamp);
  CHECK(d.pose == o.pose);
  CHECK(d.v == o.v);
  CHECK(d.omega == o.omega);
  CHECK(d.distance == o.distance);
  check_truncations<msg::Odom>(b);

  msg::Status s{3.0, 1, true, false, false, msg::NavState::kNoPath, 42};
  const auto sb = msg::encode(s);
  const auto sd = msg::decode<msg::Status>(sb);
  CHECK(sd.power == 1);
  CHECK(sd.headlights);
  CHECK_FALSE(sd.odometry_degraded);
  CHECK_FALSE(sd.autonomy);
  CHECK(sd.nav == msg::NavState::kNoPath);
  CHECK(sd.map_version == 42);
  check_truncations<msg::Status>(sb);
  CHECK_THROWS_AS(msg::decode<msg::Odom>(sb), DecodeError);
}

TEST_CASE("messages: scan keeps no-return beams") {
  msg::ScanMsg s;
  s.stamp = 1.0;
  s.angle_min = -3.0;
  s.angle_increment = 0.5;
  s.max_range = 8.0;
  s.ranges = {1.5f, std::numeric_limits<float>::infinity(), 7.25f};
  const auto d = msg::decode<msg::ScanMsg>(msg::encode(s));
  REQUIRE(d.ranges.size() == 3);
  CHECK(d.ranges[0] == 1.5f);
  CHECK(std::isinf(d.ranges[1]));
  CHECK(d.ranges[2] == 7.25f);
  check_truncations<msg::ScanMsg>(msg::encode(s));
}

TEST_CASE("messages: commands round trip") {
  CHECK(msg::decode<msg::CmdVel>(msg::encode(msg::CmdVel{0.2, -0.5})).omega == -0.5);
  const auto g = msg::decode<msg::NavGoal>(msg::encode(msg::NavGoal{10.0, 5.5, 0.4}));
  CHECK(g.x == 10.0);
  CHECK(g.y == 5.5);
  CHECK(g.tolerance == 0.4);
  CHECK(msg::decode<msg::Lights>(msg::encode(msg::Lights{true})).on);
  CHECK(msg::decode<msg::ResetOdom>(msg::encode(msg::ResetOdom{{1, 2, 3}})).pose == Pose2{1, 2, 3});
  CHECK(msg::encode(msg::Reboot{}).size() == 1);
  CHECK_NOTHROW(msg::decode<msg::Reboot>(msg::encode(msg::Reboot{})));
  Bytes bad_bool = msg::encode(msg::Lights{true});
  bad_bool[1] = 2;
  CHECK_THROWS_AS(msg::decode<msg::Lights>(bad_bool), DecodeError);
  CHECK_THROWS_AS(msg::peek_kind(Bytes{}), DecodeError);
  CHECK_THROWS_AS(msg::peek_kind(Bytes{99}), DecodeError);
}

TEST_CASE("messages: maps and anchors round trip") {
  msg::MergedMapMsg m;
  m.stamp = 100.0;
  m.version = 9;
  m.grid = {'L', 'G', 'R', '1', 0, 1, 2};
  m.anchors = {{"leo1", true, {0, 0, 0}, 1.0}, {"leo2", false, {1, 2, 0.5}, 0.1}};
  const auto b = msg::encode(m);
  const auto d = msg::decode<msg::MergedMapMsg>(b);
  CHECK(d.grid == m.grid);
  REQUIRE(d.anchors.size() == 2);
  CHECK(d.anchors[1].ns == "leo2");
  CHECK_FALSE(d.anchors[1].anchored);
  CHECK(d.anchors[1].to_global == Pose2{1, 2, 0.5});
  check_truncations<msg::MergedMapMsg>(b);

  msg::NavStatus ns{5.0, msg::NavState::kFrameUnknown, 1.0, 2.0, "no anchor"};
  const auto nd = msg::decode<msg::NavStatus>(msg::encode(ns));
  CHECK(nd.state == msg::NavState::kFrameUnknown);
  CHECK(nd.detail == "no anchor");
  CHECK(msg::to_string(nd.state) == "frame_unknown");
}

TEST_CASE("messages: random garbage never crashes a decoder (property)") {
  sim::RngStream rng(77, "messages.fuzz");
  for (int i = 0; i < 3000; ++i) {
    Bytes b(rng.below(64));
    for (auto& c : b) c = static_cast<std::uint8_t>(rng.below(256));
    if (!b.empty()) b[0] = static_cast<std::uint8_t>(1 + rng.below(12));
    try {
      switch (msg::peek_kind(b)) {
        case msg::Kind::kOdom: (void)msg::decode<msg::Odom>(b); break;
        case msg::Kind::kStatus: (void)msg::decode<msg::Status>(b); break;
        case msg::Kind::kScan: (void)msg::decode<msg::ScanMsg>(b); break;
        case msg::Kind::kMap: (void)msg::decode<msg::MapMsg>(b); break;
        case msg::Kind::kCmdVel: (void)msg::decode<msg::CmdVel>(b); break;
        case msg::Kind::kNavGoal: (void)msg::decode<msg::NavGoal>(b); break;
        case msg::Kind::kLights: (void)msg::decode<msg::Lights>(b); break;
        case msg::Kind::kResetOdom: (void)msg::decode<msg::ResetOdom>(b); break;
        case msg::Kind::kReboot: (void)msg::decode<msg::Reboot>(b); break;
        case msg::Kind::kNavStatus: (void)msg::decode<msg::NavStatus>(b); break;
        case msg::Kind::kAnchors: (void)msg::decode<msg::Anchors>(b); break;
        case msg::Kind::kMergedMap: (void)msg::decode<msg::MergedMapMsg>(b); break;
      }
    } catch (const DecodeError&) {
    }
  }
  CHECK(true);
}
