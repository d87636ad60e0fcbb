#include "lunasim/scenario/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace lunasim::scenario {

ScenarioError::ScenarioError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kBlackout: return "blackout";
    case EventKind::kShutdownRover: return "shutdown_rover";
    case EventKind::kDisableAutonomy: return "disable_autonomy";
    case EventKind::kRebootRover: return "reboot_rover";
    case EventKind::kScriptGoal: return "script_goal";
    case EventKind::kScriptTeleop: return "script_teleop";
    case EventKind::kResetOdom: return "reset_odom";
    case EventKind::kLights: return "lights";
  }
  return "?";
}

const RoverSpec* ScenarioSpec::rover(std::string_view n) const {
  for (const auto& r : rovers) {
    if (r.name == n) return &r;
  }
  return nullptr;
}

namespace {

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

[[noreturn]] void fail(const YAML::Node& n, const std::string& what) { throw ScenarioError(what, line_of(n)); }

// Map section reader: every key must be consumed by a getter, anything left
// over is reported as unknown.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (!node_.IsMap()) fail(node_, "'" + name_ + "' must be a mapping");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return static_cast<bool>(lookup(key));
  }

  YAML::Node node(const char* key) {
    seen_.insert(key);
    return lookup(key);
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const YAML::Node v = lookup(key);
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "bad value for '" + name_ + "." + key + "'");
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(out)) fail(v, "'" + name_ + "." + key + "' must be finite");
    }
  }

  template <class T>
  T require(const char* key) {
    if (!has(key)) fail(node_, "'" + name_ + "' is missing '" + key + "'");
    T out{};
    get(key, out);
    return out;
  }

  void positive(const char* key, double& out) {
    get(key, out);
    if (has(key) && !(out > 0.0)) fail(lookup(key), "'" + name_ + "." + key + "' must be positive");
  }

  void finish() const {
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) fail(kv.first, "unknown field '" + key + "' in '" + name_ + "'");
    }
  }

  const YAML::Node& raw() const { return node_; }

 private:
  // Const lookup; the mutable operator[] would insert missing keys.
  YAML::Node lookup(const char* key) const {
    const YAML::Node& n = node_;
    return n[key];
  }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

void parse_world(Section s, world::ArenaSpec& w) {
  s.positive("width", w.width_m);
  s.positive("height", w.height_m);
  s.positive("resolution", w.resolution_m);
  if (const auto obs = s.node("obstacles")) {
    if (!obs.IsSequence()) fail(obs, "'world.obstacles' must be a list");
    for (const auto& o : obs) {
      Section os(o, "obstacle");
      world::Obstacle ob;
      const auto kind = os.require<std::string>("kind");
      const auto k = world::obstacle_kind_from_string(kind);
      if (!k) fail(o, "unknown obstacle kind '" + kind + "'");
      ob.kind = *k;
      ob.center = {os.require<double>("x"), os.require<double>("y")};
      if (ob.kind == world::ObstacleKind::kWall) {
        ob.half_extent = {os.require<double>("half_x"), os.require<double>("half_y")};
        if (!(ob.half_extent.x > 0 && ob.half_extent.y > 0)) fail(o, "wall half extents must be positive");
      } else {
        ob.radius = os.require<double>("radius");
        if (!(ob.radius > 0)) fail(o, "obstacle radius must be positive");
        if (ob.kind == world::ObstacleKind::kCrater) os.positive("rim_width", ob.rim_width);
      }
      os.finish();
      w.obstacles.push_back(ob);
    }
  }
  s.finish();
}

bool inside(const world::ArenaSpec& w, Vec2 p) { return p.x > 0 && p.y > 0 && p.x < w.width_m && p.y < w.height_m; }

void parse_net(Section s, mesh::NetParams& p, mesh::LinkCurve& curve) {
  s.positive("overhead_s", p.overhead_s);
  s.positive("test_frame_bits", p.test_frame_bits);
  s.positive("ewma_alpha", p.ewma_alpha);
  s.get("load_weight", p.load_weight);
  if (s.has("metric")) {
    const auto m = s.require<std::string>("metric");
    if (m == "airtime") p.metric = mesh::MetricKind::kAirtime;
    else if (m == "airtime_plus") p.metric = mesh::MetricKind::kAirtimePlus;
    else fail(s.node("metric"), "metric must be 'airtime' or 'airtime_plus'");
  }
  s.positive("link_sample_period_s", p.link_sample_period_s);
  s.positive("preq_interval_s", p.preq_interval_s);
  s.positive("route_ttl_s", p.route_ttl_s);
  s.positive("discovery_timeout_s", p.discovery_timeout_s);
  s.get("discovery_retries", p.discovery_retries);
  s.get("retry_limit", p.retry_limit);
  s.get("max_hops", p.max_hops);
  if (const auto c = s.node("link_curve")) {
    Section cs(c, "net.link_curve");
    if (const auto steps = cs.node("steps")) {
      if (!steps.IsSequence() || steps.size() == 0) fail(steps, "'link_curve.steps' must be a non-empty list");
      curve.steps.clear();
      for (const auto& st : steps) {
        if (!st.IsSequence() || st.size() != 2) fail(st, "link curve step must be [max_distance_m, rate_bps]");
        curve.steps.push_back({st[0].as<double>(), st[1].as<double>()});
      }
    }
    cs.get("error_exponent", curve.error_exponent);
    cs.get("error_cap", curve.error_cap);
    cs.finish();
  }
  s.finish();
  try {
    p.validate();
    curve.validate();
  } catch (const std::exception& e) {
    fail(s.raw(), e.what());
  }
}

void parse_comms(Section s, comms::CommsParams& p) {
  s.get("message_overhead_bytes", p.message_overhead_bytes);
  s.get("mtu_bytes", p.mtu_bytes);
  s.positive("rto_s", p.rto_s);
  s.get("retransmit_limit", p.retransmit_limit);
  s.positive("discovery_period_s", p.discovery_period_s);
  s.get("discovery_expiry_periods", p.discovery_expiry_periods);
  s.positive("gap_timeout_s", p.gap_timeout_s);
  s.get("gateway_capacity_bytes", p.gateway_capacity_bytes);
  s.finish();
  try {
    p.validate();
  } catch (const std::exception& e) {
    fail(s.raw(), e.what());
  }
}

Pose2 parse_pose(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || (n.size() != 2 && n.size() != 3)) fail(n, what + " must be [x, y] or [x, y, theta]");
  try {
    return {n[0].as<double>(), n[1].as<double>(), n.size() == 3 ? n[2].as<double>() : 0.0};
  } catch (const YAML::Exception&) {
    fail(n, what + " must be numeric");
  }
}

TimedEvent parse_event(const YAML::Node& n, const ScenarioSpec& spec) {
  Section s(n, "event");
  TimedEvent ev;
  ev.line = line_of(n);
  ev.at = s.require<double>("at");
  const auto kind = s.require<std::string>("kind");
  auto need_rover = [&] {
    ev.rover = s.require<std::string>("rover");
    if (!spec.rover(ev.rover)) fail(s.node("rover"), "event names unknown rover '" + ev.rover + "'");
  };
  if (kind == "blackout") {
    ev.kind = EventKind::kBlackout;
    if (s.has("until")) ev.until = s.require<double>("until");
    else ev.until = ev.at + s.require<double>("duration");
    if (!(ev.until > ev.at)) fail(n, "blackout must end after it starts");
    const auto links = s.node("links");
    if (!links || !links.IsSequence() || links.size() == 0) fail(n, "blackout needs a non-empty 'links' list");
    for (const auto& l : links) {
      if (!l.IsSequence() || l.size() != 2) fail(l, "blackout link must be [a, b]");
      mesh::LinkSelector sel{l[0].as<std::string>(), l[1].as<std::string>()};
      auto known = [&](const std::string& name) {
        return name == "lander" || name == "ground_station" || spec.rover(name) != nullptr;
      };
      if (!known(sel.a)) fail(l, "blackout names unknown node '" + sel.a + "'");
      if (sel.b != "*" && !known(sel.b)) fail(l, "blackout names unknown node '" + sel.b + "'");
      ev.links.push_back(sel);
    }
  } else if (kind == "shutdown_rover") {
    ev.kind = EventKind::kShutdownRover;
    need_rover();
  } else if (kind == "disable_autonomy") {
    ev.kind = EventKind::kDisableAutonomy;
    need_rover();
  } else if (kind == "reboot_rover") {
    ev.kind = EventKind::kRebootRover;
    need_rover();
  } else if (kind == "script_goal") {
    ev.kind = EventKind::kScriptGoal;
    need_rover();
    ev.x = s.require<double>("x");
    ev.y = s.require<double>("y");
    s.positive("tolerance", ev.tolerance);
  } else if (kind == "script_teleop") {
    ev.kind = EventKind::kScriptTeleop;
    need_rover();
    ev.v = s.require<double>("v");
    ev.omega = s.require<double>("omega");
    ev.duration = s.require<double>("duration");
    if (!(ev.duration > 0.0)) fail(n, "teleop duration must be positive");
  } else if (kind == "reset_odom") {
    ev.kind = EventKind::kResetOdom;
    need_rover();
    ev.x = s.require<double>("x");
    ev.y = s.require<double>("y");
    s.get("theta", ev.theta);
  } else if (kind == "lights") {
    ev.kind = EventKind::kLights;
    need_rover();
    ev.on = s.require<bool>("on");
  } else {
    fail(s.node("kind"), "unknown event kind '" + kind + "'");
  }
  s.finish();
  if (ev.at < 0.0 || ev.at > spec.duration_s) fail(n, "event time outside [0, duration]");
  if (ev.kind == EventKind::kBlackout && ev.until > spec.duration_s) fail(n, "blackout ends after the run");
  if (ev.kind == EventKind::kScriptTeleop && ev.at + ev.duration > spec.duration_s) {
    fail(n, "teleop script runs past the end of the run");
  }
  if ((ev.kind == EventKind::kScriptGoal || ev.kind == EventKind::kResetOdom) && !inside(spec.world, {ev.x, ev.y})) {
    fail(n, "event position outside the arena");
  }
  return ev;
}

}  // namespace

ScenarioSpec parse_scenario_text(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ScenarioError("scenario must be a mapping", line_of(root));
  Section top(root, "scenario");
  ScenarioSpec spec;
  top.get("name", spec.name);
  top.get("seed", spec.seed);
  top.positive("duration", spec.duration_s);
  if (const auto w = top.node("world")) parse_world(Section(w, "world"), spec.world);

  if (const auto l = top.node("lander")) {
    Section s(l, "lander");
    if (s.has("position")) {
      const auto p = parse_pose(s.node("position"), "lander.position");
      spec.lander.position = {p.x, p.y};
    }
    s.positive("merge_period", spec.lander.merge_period_s);
    s.positive("match_period", spec.lander.match_period_s);
    s.finish();
  }
  if (!inside(spec.world, spec.lander.position)) fail(top.node("lander"), "lander position outside the arena");

  if (const auto g = top.node("ground_link")) {
    Section s(g, "ground_link");
    s.positive("rate_bps", spec.ground.rate_bps);
    s.get("one_way_delay", spec.ground.one_way_delay_s);
    s.get("frame_error", spec.ground.frame_error);
    s.finish();
    if (spec.ground.one_way_delay_s < 0.0) fail(g, "one_way_delay must be non-negative");
    if (spec.ground.frame_error < 0.0 || spec.ground.frame_error >= 1.0) fail(g, "frame_error must be in [0, 1)");
  }

  const auto rovers = top.node("rovers");
  if (!rovers || !rovers.IsSequence() || rovers.size() == 0) fail(root, "scenario needs a non-empty 'rovers' list");
  for (const auto& r : rovers) {
    Section s(r, "rover");
    RoverSpec rs;
    rs.name = s.require<std::string>("name");
    if (rs.name.empty() || rs.name.find('/') != std::string::npos || rs.name == "lander" ||
        rs.name == "ground_station" || rs.name == "global") {
      fail(s.node("name"), "invalid rover name '" + rs.name + "'");
    }
    if (spec.rover(rs.name)) fail(s.node("name"), "duplicate rover name '" + rs.name + "'");
    if (!s.has("start")) fail(r, "rover '" + rs.name + "' is missing 'start'");
    rs.start = parse_pose(s.node("start"), "rover start");
    if (!inside(spec.world, rs.start.position())) fail(s.node("start"), "rover '" + rs.name + "' starts outside the arena");
    s.positive("v_max", rs.v_max);
    s.positive("cruise_speed", rs.cruise_speed);
    s.get("known_start", rs.known_start);
    s.get("headlights", rs.headlights);
    s.get("autonomy", rs.autonomy);
    s.finish();
    spec.rovers.push_back(rs);
  }

  if (const auto n = top.node("net")) parse_net(Section(n, "net"), spec.net, spec.link_curve);
  if (const auto c = top.node("comms")) parse_comms(Section(c, "comms"), spec.comms);
  if (const auto m = top.node("mission")) {
    Section s(m, "mission");
    s.positive("control_period", spec.mission.control_period_s);
    s.positive("scan_period", spec.mission.scan_period_s);
    s.positive("odom_period", spec.mission.odom_period_s);
    s.positive("status_period", spec.mission.status_period_s);
    s.positive("map_period", spec.mission.map_period_s);
    s.positive("metrics_period", spec.mission.metrics_period_s);
    s.positive("teleop_rate_hz", spec.mission.teleop_rate_hz);
    s.positive("map_resolution", spec.mission.map_resolution_m);
    s.finish();
  }
  if (const auto evs = top.node("events")) {
    if (!evs.IsSequence()) fail(evs, "'events' must be a list");
    for (const auto& e : evs) spec.events.push_back(parse_event(e, spec));
  }
  top.finish();
  std::stable_sort(spec.events.begin(), spec.events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.at < b.at; });
  return spec;
}

ScenarioSpec parse_scenario(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file " + file.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

nlohmann::json to_json(const ScenarioSpec& s) {
  using nlohmann::json;
  json obstacles = json::array();
  for (const auto& o : s.world.obstacles) {
    json j{{"kind", world::to_string(o.kind)}, {"x", o.center.x}, {"y", o.center.y}};
    if (o.kind == world::ObstacleKind::kWall) {
      j["half_x"] = o.half_extent.x;
      j["half_y"] = o.half_extent.y;
    } else {
      j["radius"] = o.radius;
      if (o.kind == world::ObstacleKind::kCrater) j["rim_width"] = o.rim_width;
    }
    obstacles.push_back(j);
  }
  json rovers = json::array();
  for (const auto& r : s.rovers) {
    rovers.push_back({{"name", r.name},
                      {"start", {r.start.x, r.start.y, r.start.theta}},
                      {"v_max", r.v_max},
                      {"cruise_speed", r.cruise_speed},
                      {"known_start", r.known_start},
                      {"headlights", r.headlights},
                      {"autonomy", r.autonomy}});
  }
  json steps = json::array();
  for (const auto& st : s.link_curve.steps) steps.push_back({st.max_distance_m, st.rate_bps});
  json events = json::array();
  for (const auto& e : s.events) {
    json j{{"at", e.at}, {"kind", to_string(e.kind)}};
    if (!e.rover.empty()) j["rover"] = e.rover;
    switch (e.kind) {
      case EventKind::kBlackout: {
        j["until"] = e.until;
        json links = json::array();
        for (const auto& l : e.links) links.push_back({l.a, l.b});
        j["links"] = links;
        break;
      }
      case EventKind::kScriptGoal:
        j["x"] = e.x;
        j["y"] = e.y;
        j["tolerance"] = e.tolerance;
        break;
      case EventKind::kScriptTeleop:
        j["v"] = e.v;
        j["omega"] = e.omega;
        j["duration"] = e.duration;
        break;
      case EventKind::kResetOdom:
        j["x"] = e.x;
        j["y"] = e.y;
        j["theta"] = e.theta;
        break;
      case EventKind::kLights: j["on"] = e.on; break;
      default: break;
    }
    events.push_back(j);
  }
  return {
      {"name", s.name},
      {"seed", s.seed},
      {"duration", s.duration_s},
      {"world",
       {{"width", s.world.width_m},
        {"height", s.world.height_m},
        {"resolution", s.world.resolution_m},
        {"obstacles", obstacles}}},
      {"lander",
       {{"position", {s.lander.position.x, s.lander.position.y}},
        {"merge_period", s.lander.merge_period_s},
        {"match_period", s.lander.match_period_s}}},
      {"ground_link",
       {{"rate_bps", s.ground.rate_bps},
        {"one_way_delay", s.ground.one_way_delay_s},
        {"frame_error", s.ground.frame_error}}},
      {"rovers", rovers},
      {"net",
       {{"overhead_s", s.net.overhead_s},
        {"test_frame_bits", s.net.test_frame_bits},
        {"ewma_alpha", s.net.ewma_alpha},
        {"load_weight", s.net.load_weight},
        {"metric", s.net.metric == mesh::MetricKind::kAirtime ? "airtime" : "airtime_plus"},
        {"link_sample_period_s", s.net.link_sample_period_s},
        {"preq_interval_s", s.net.preq_interval_s},
        {"route_ttl_s", s.net.route_ttl_s},
        {"discovery_timeout_s", s.net.discovery_timeout_s},
        {"discovery_retries", s.net.discovery_retries},
        {"retry_limit", s.net.retry_limit},
        {"max_hops", s.net.max_hops},
        {"link_curve",
         {{"steps", steps}, {"error_exponent", s.link_curve.error_exponent}, {"error_cap", s.link_curve.error_cap}}}}},
      {"comms",
       {{"message_overhead_bytes", s.comms.message_overhead_bytes},
        {"mtu_bytes", s.comms.mtu_bytes},
        {"rto_s", s.comms.rto_s},
        {"retransmit_limit", s.comms.retransmit_limit},
        {"discovery_period_s", s.comms.discovery_period_s},
        {"discovery_expiry_periods", s.comms.discovery_expiry_periods},
        {"gap_timeout_s", s.comms.gap_timeout_s},
        {"gateway_capacity_bytes", s.comms.gateway_capacity_bytes}}},
      {"mission",
       {{"control_period", s.mission.control_period_s},
        {"scan_period", s.mission.scan_period_s},
        {"odom_period", s.mission.odom_period_s},
        {"status_period", s.mission.status_period_s},
        {"map_period", s.mission.map_period_s},
        {"metrics_period", s.mission.metrics_period_s},
        {"teleop_rate_hz", s.mission.teleop_rate_hz},
        {"map_resolution", s.mission.map_resolution_m}}},
      {"events", events},
  };
}

}  // namespace lunasim::scenario
