#include "lunasim/scenario/agents.hpp"

#include <cmath>

#include "lunasim/mapping/grid_codec.hpp"

namespace lunasim::scenario {

namespace {

rover::RoverConfig rover_config(const RoverSpec& s) {
  rover::RoverConfig c;
  c.name = s.name;
  c.start = s.start;
  c.v_max = s.v_max;
  c.known_start = s.known_start;
  return c;
}

nav::NavigatorParams nav_params(const RoverSpec& s) {
  nav::NavigatorParams p;
  p.follower.cruise_speed = s.cruise_speed;
  p.follower.v_max = s.v_max;
  return p;
}

template <class T, class F>
void with_decoded(const comms::Envelope& env, F&& f) {
  if (!env.payload) return;
  try {
    f(msg::decode<T>(*env.payload));
  } catch (const DecodeError&) {
    // Malformed payloads are dropped at the endpoint.
  }
}

}  // namespace

RoverAgent::RoverAgent(sim::Kernel& kernel, comms::CommsBus& bus, mesh::NodeIndex node,
                       const world::GroundTruthGrid& truth, const RoverSpec& spec, const MissionSpec& mission)
    : kernel_(kernel),
      bus_(bus),
      node_(node),
      truth_(truth),
      spec_(spec),
      mission_(mission),
      handler_(kernel.register_handler("rover." + spec.name)),
      rover_(rover_config(spec), kernel.fork_rng("rover." + spec.name)),
      nav_(nav_params(spec)) {
  rover_.set_collision_world(&truth_);
  rover_.set_headlights(spec.headlights);
  const Pose2 o = rover_.odom_pose();
  const double half = 10.0;
  const int cells = static_cast<int>(std::lround(2 * half / mission.map_resolution_m));
  map_ = mapping::OccupancyGrid({o.x - half, o.y - half, 0.0}, mission.map_resolution_m, cells, cells);
  nav_.set_enabled(spec.autonomy);
  nav_.set_status_handler([this](msg::NavState s, const std::string& detail) {
    msg::NavStatus m;
    m.stamp = now();
    m.state = s;
    if (const auto g = nav_.local_goal()) {
      const Vec2 merged = anchor_ ? anchor_->apply(*g) : *g;
      m.goal_x = merged.x;
      m.goal_y = merged.y;
    }
    m.detail = detail;
    bus_.publish(node_, msg::topic(spec_.name, msg::kNavStatusTopic), msg::encode(m), comms::Qos::kReliable);
  });
}

void RoverAgent::start() {
  const std::string& ns = spec_.name;
  bus_.subscribe(node_, msg::topic(ns, msg::kCmdVelTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::CmdVel>(e, [this](const msg::CmdVel& c) {
      counters_.cmd_vel += 1;
      deadman_.accept({c.v, c.omega}, now());
    });
  });
  bus_.subscribe(node_, msg::topic(ns, msg::kLightsTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::Lights>(e, [this](const msg::Lights& l) {
      counters_.lights += 1;
      rover_.set_headlights(l.on);
    });
  });
  bus_.subscribe(node_, msg::topic(ns, msg::kNavGoalTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::NavGoal>(e, [this](const msg::NavGoal& g) {
      counters_.nav_goals += 1;
      nav_.set_goal(g, anchor_, map_, rover_.odom_pose(), now());
    });
  });
  bus_.subscribe(node_, msg::topic(ns, msg::kResetOdomTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::ResetOdom>(e, [this](const msg::ResetOdom& r) {
      if (!rover_.powered()) return;
      counters_.resets += 1;
      rover_.reset_odometry(r.pose);
    });
  });
  bus_.subscribe(node_, msg::topic(ns, msg::kRebootTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::Reboot>(e, [this](const msg::Reboot&) {
      counters_.reboots += 1;
      // Leave time for the acknowledgement to go out before the radio drops.
      kernel_.schedule_after(1.0, handler_, [this] {
        if (rover_.reboot(now())) sync_power();
      });
    });
  });
  bus_.subscribe(node_, msg::topic("lander", msg::kAnchorsTopic), [this](const comms::Envelope& e) {
    with_decoded<msg::Anchors>(e, [this](const msg::Anchors& a) {
      for (const auto& an : a.anchors) {
        if (an.ns == spec_.name) anchor_ = an.anchored ? std::optional<Pose2>(an.to_global) : std::nullopt;
      }
    });
  });

  // Stagger the periodic loops per rover so equal periods do not pile up
  // on the same instant.
  const double phase = 0.01 * static_cast<double>(node_ % 10);
  auto every = [this](double period, double first, Loop fn) {
    kernel_.schedule(first, handler_, [this, period, fn] { periodic(period, fn); });
  };
  every(mission_.control_period_s, phase, &RoverAgent::control_tick);
  every(mission_.scan_period_s, phase + 0.001, &RoverAgent::scan_tick);
  every(mission_.odom_period_s, phase + 0.002, &RoverAgent::publish_odom);
  every(mission_.status_period_s, phase + 0.003, &RoverAgent::publish_status);
  every(mission_.map_period_s, mission_.map_period_s + phase, &RoverAgent::publish_map);
}

void RoverAgent::periodic(double period, Loop fn) {
  (this->*fn)();
  kernel_.schedule_after(period, handler_, [this, period, fn] { periodic(period, fn); });
}

void RoverAgent::shutdown() {
  rover_.shutdown();
  sync_power();
}

void RoverAgent::disable_autonomy() { nav_.set_enabled(false); }

void RoverAgent::sync_power() {
  rover_.update_power(now());
  const bool p = rover_.powered();
  if (p == was_powered_) return;
  was_powered_ = p;
  bus_.set_powered(node_, p);
  if (!p) {
    nav_.cancel();
    deadman_.clear();
  }
}

void RoverAgent::control_tick() {
  sync_power();
  if (!rover_.powered()) return;
  const double t = now();
  rover::Twist cmd;
  if (deadman_.active(t)) {
    cmd = deadman_.current(t);
  } else if (nav_.has_goal()) {
    const auto d = nav_.tick(map_, rover_.odom_pose(), t);
    cmd = {d.v, d.omega};
  }
  if (cmd == rover::Twist{}) return;
  if (rover_.apply_drive(cmd, mission_.control_period_s) == rover::DriveResult::kBlocked) {
    counters_.blocked_steps += 1;
  }
}

void RoverAgent::scan_tick() {
  if (!rover_.powered()) return;
  const Pose2 pose = rover_.odom_pose();
  integrator_.integrate(map_, pose, rover_.sense_scan(truth_));
  map_dirty_ = true;
  if (nav_.has_goal()) nav_.on_map_update(map_, pose, now());
}

void RoverAgent::publish_odom() {
  if (!rover_.powered()) return;
  msg::Odom m;
  m.stamp = now();
  m.pose = rover_.odom_pose();
  m.v = rover_.twist().v;
  m.omega = rover_.twist().omega;
  m.distance = rover_.distance_since_reset();
  bus_.publish(node_, msg::topic(spec_.name, msg::kOdomTopic), msg::encode(m), comms::Qos::kBestEffort);
}

void RoverAgent::publish_status() {
  if (!rover_.powered()) return;
  msg::Status m;
  m.stamp = now();
  m.power = static_cast<std::uint8_t>(rover_.power_state());
  m.headlights = rover_.headlights();
  m.odometry_degraded = rover_.odometry_degraded();
  m.autonomy = nav_.enabled();
  m.nav = nav_.state();
  m.map_version = map_version_;
  bus_.publish(node_, msg::topic(spec_.name, msg::kStatusTopic), msg::encode(m), comms::Qos::kBestEffort);
}

void RoverAgent::publish_map() {
  if (!rover_.powered() || !map_dirty_) return;
  msg::MapMsg m;
  m.stamp = now();
  m.version = map_version_ + 1;
  m.grid = mapping::encode_grid(map_);
  const auto r = bus_.publish(node_, msg::topic(spec_.name, msg::kMapTopic), msg::encode(m), comms::Qos::kReliable);
  if (r.status == comms::PublishStatus::kSent || r.status == comms::PublishStatus::kNoSubscribers) {
    map_version_ = m.version;
    map_dirty_ = false;
  }
}

LanderAgent::LanderAgent(sim::Kernel& kernel, comms::CommsBus& bus, mesh::NodeIndex node, const ScenarioSpec& spec)
    : kernel_(kernel),
      bus_(bus),
      node_(node),
      period_(spec.lander.merge_period_s),
      match_period_(spec.lander.match_period_s),
      handler_(kernel.register_handler("lander")) {
  const double res = spec.mission.map_resolution_m;
  base_ = mapping::OccupancyGrid({0.0, 0.0, 0.0}, res, static_cast<int>(std::ceil(spec.world.width_m / res)),
                                 static_cast<int>(std::ceil(spec.world.height_m / res)));
  merged_ = base_;
  for (const auto& r : spec.rovers) rovers_[r.name].known_start = r.known_start;
}

void LanderAgent::start() {
  bus_.subscribe(node_, "*/map", [this](const comms::Envelope& e) { on_map(e); });
  kernel_.schedule(period_ + 0.005, handler_, [this] { merge_tick(); });
}

void LanderAgent::merge_tick() {
  merge_now();
  kernel_.schedule_after(period_, handler_, [this] { merge_tick(); });
}

void LanderAgent::on_map(const comms::Envelope& env) {
  const auto ns = comms::Topic::parse(env.topic).ns;
  auto it = rovers_.find(ns);
  if (it == rovers_.end()) return;
  with_decoded<msg::MapMsg>(env, [&](const msg::MapMsg& m) {
    if (m.version <= it->second.version) return;
    try {
      it->second.map = mapping::decode_grid(m.grid);
      it->second.version = m.version;
    } catch (const DecodeError&) {
    }
  });
}

void LanderAgent::merge_now() {
  const double t = kernel_.now_seconds();
  std::vector<mapping::LocalMap> locals;
  std::vector<std::string> names;
  for (auto& [ns, st] : rovers_) {
    if (!st.map) continue;
    if (st.known_start) {
      st.anchor = Pose2{};
    } else if (!st.anchor && t >= st.next_match_at) {
      st.match_attempts += 1;
      st.next_match_at = t + match_period_;
      const auto r = mapping::match_and_estimate(merged_, *st.map);
      st.last_match = r.status;
      if (r.accepted()) st.anchor = r.estimate->transform;
    }
    locals.push_back({&*st.map, st.anchor});
    names.push_back(ns);
  }
  if (locals.empty()) return;
  merged_ = mapping::merge(base_, locals).grid;
  version_ += 1;

  std::vector<msg::Anchor> anchors;
  for (const auto& ns : names) {
    const auto& st = rovers_.at(ns);
    msg::Anchor a;
    a.ns = ns;
    a.anchored = st.anchor.has_value();
    if (st.anchor) a.to_global = *st.anchor;
    anchors.push_back(a);
  }
  bus_.publish(node_, msg::topic("lander", msg::kAnchorsTopic), msg::encode(msg::Anchors{t, version_, anchors}),
               comms::Qos::kReliable);
  msg::MergedMapMsg mm;
  mm.stamp = t;
  mm.version = version_;
  mm.grid = mapping::encode_grid(merged_);
  mm.anchors = std::move(anchors);
  bus_.publish(node_, msg::topic("lander", msg::kMergedMapTopic), msg::encode(mm), comms::Qos::kReliable);
}

}  // namespace lunasim::scenario
