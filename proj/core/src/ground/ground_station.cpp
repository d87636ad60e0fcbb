#include "lunasim/ground/ground_station.hpp"

#include <cmath>

#include "lunasim/bytes.hpp"

namespace lunasim::ground {

std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::kTeleop: return "teleop";
    case CommandKind::kLights: return "lights";
    case CommandKind::kResetOdom: return "reset_odom";
    case CommandKind::kReboot: return "reboot";
    case CommandKind::kNavGoal: return "nav_goal";
  }
  return "?";
}

std::optional<CommandKind> command_kind_from_string(std::string_view s) {
  for (auto k : {CommandKind::kTeleop, CommandKind::kLights, CommandKind::kResetOdom, CommandKind::kReboot,
                 CommandKind::kNavGoal}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

GroundStation::GroundStation(sim::Kernel& kernel, comms::CommsBus& bus, mesh::MeshNetwork& net,
                             mesh::NodeIndex node, GroundStationOptions options)
    : kernel_(kernel),
      bus_(bus),
      net_(net),
      node_(node),
      options_(options),
      handler_(kernel.register_handler("ground_station")) {
  const auto& owned = bus_.owned_namespaces(node_);
  own_ns_ = owned.empty() ? net_.name(node_) : owned.front();
}

void GroundStation::start() {
  auto cb = [this](const comms::Envelope& e) { on_envelope(e); };
  for (auto name : {msg::kOdomTopic, msg::kStatusTopic, msg::kNavStatusTopic, msg::kMergedMapTopic}) {
    bus_.subscribe(node_, "*/" + std::string(name), cb);
  }
  if (options_.include_local_maps) bus_.subscribe(node_, "*/" + std::string(msg::kMapTopic), cb);
  last_sample_at_ = kernel_.now_seconds();
  last_sample_ = bus_.traffic(node_);
  kernel_.schedule_after(options_.ui_tick_s, handler_, [this] { ui_tick(); });
  if (options_.bandwidth_enabled) {
    kernel_.schedule_after(options_.bandwidth_window_s, handler_, [this] { bandwidth_tick(); });
  }
}

bool GroundStation::is_rover_ns(const std::string& ns) const {
  if (ns == own_ns_ || ns == comms::kGlobalNamespace) return false;
  if (const auto host = bus_.gateway_host()) {
    for (const auto& h : bus_.owned_namespaces(*host)) {
      if (h == ns) return false;
    }
  }
  return true;
}

void GroundStation::note(std::string text) {
  ticker_.push_back({kernel_.now_seconds(), std::move(text)});
  while (ticker_.size() > options_.ticker_length) ticker_.pop_front();
}

void GroundStation::on_envelope(const comms::Envelope& e) {
  const auto t = comms::Topic::parse(e.topic);
  const auto& payload = *e.payload;
  try {
    if (t.name == msg::kMergedMapTopic) {
      merged_ = msg::decode<msg::MergedMapMsg>(payload);
      return;
    }
    if (!is_rover_ns(t.ns)) return;
    auto& r = rovers_[t.ns];
    r.ns = t.ns;
    r.last_envelope_at = e.delivered_at;
    if (t.name == msg::kOdomTopic) {
      r.odom = msg::decode<msg::Odom>(payload);
    } else if (t.name == msg::kStatusTopic) {
      const auto s = msg::decode<msg::Status>(payload);
      if (r.status && s.odometry_degraded && !r.status->odometry_degraded) {
        note(t.ns + " reports odometry degraded");
      }
      r.status = s;
    } else if (t.name == msg::kNavStatusTopic) {
      const auto n = msg::decode<msg::NavStatus>(payload);
      if (n.state == msg::NavState::kNoPath || n.state == msg::NavState::kFrameUnknown ||
          n.state == msg::NavState::kGoalReached) {
        std::string text = t.ns + " navigation: " + std::string(msg::to_string(n.state));
        if (!n.detail.empty()) text += " (" + n.detail + ")";
        note(std::move(text));
      }
      r.nav = n;
    } else if (t.name == msg::kMapTopic) {
      const auto m = msg::decode<msg::MapMsg>(payload);
      if (m.version >= r.map_version) {
        r.map_version = m.version;
        r.map_grid = m.grid;
      }
    }
  } catch (const DecodeError& err) {
    note("malformed " + e.topic + ": " + err.what());
  }
}

void GroundStation::ui_tick() {
  const auto table = bus_.namespaces(node_);
  for (auto& [ns, live] : live_) {
    const bool now_live = table.count(ns) > 0;
    if (live && !now_live) note(ns + " lost (discovery expired)");
    live = now_live;
  }
  for (const auto& [ns, entry] : table) {
    if (ns == own_ns_) continue;
    auto [it, inserted] = live_.emplace(ns, true);
    if (inserted) note(ns + " discovered");
    else if (!it->second) {
      it->second = true;
      note(ns + " back online");
    }
    if (is_rover_ns(ns)) rovers_[ns].ns = ns;
  }
  const auto& ev = bus_.events();
  for (; events_seen_ < ev.size(); ++events_seen_) {
    const auto& e = ev[events_seen_];
    if (e.kind == comms::EventKind::kDeliveryFailure && e.node == node_) {
      note("delivery failed: " + e.topic + " #" + std::to_string(e.seq));
    } else if (e.kind == comms::EventKind::kGatewayOverflow) {
      note("gateway overflow, " + std::to_string(e.count) + " reliable envelopes rejected");
    }
  }
  if (options_.omniscient && truth_) {
    for (auto& [ns, r] : rovers_) r.truth = truth_(ns);
  }
  kernel_.schedule_after(options_.ui_tick_s, handler_, [this] { ui_tick(); });
}

void GroundStation::bandwidth_tick() {
  bandwidth_ = bandwidth_report(options_.bandwidth_window_s);
  kernel_.schedule_after(options_.bandwidth_window_s, handler_, [this] { bandwidth_tick(); });
}

BandwidthReport GroundStation::bandwidth_report(double window_s) {
  const double now = kernel_.now_seconds();
  const auto& cur = bus_.traffic(node_);
  BandwidthReport rep;
  rep.at = now;
  rep.window_s = now - last_sample_at_ > 0.0 ? now - last_sample_at_ : window_s;
  for (const auto& [topic, c] : cur) {
    const auto slash = topic.find('/');
    const std::string ns = topic.substr(0, slash);
    auto& row = rep.namespaces[ns];
    row.bytes_in += c.bytes_in;
    row.bytes_out += c.bytes_out;
    row.topics[topic] = {c.bytes_in, c.bytes_out};
    const auto prev = last_sample_.find(topic);
    const std::uint64_t pin = prev == last_sample_.end() ? 0 : prev->second.bytes_in;
    const std::uint64_t pout = prev == last_sample_.end() ? 0 : prev->second.bytes_out;
    row.in_bps += 8.0 * static_cast<double>(c.bytes_in - pin) / rep.window_s;
    row.out_bps += 8.0 * static_cast<double>(c.bytes_out - pout) / rep.window_s;
  }
  for (const auto& [ns, row] : rep.namespaces) {
    rep.total_in_bps += row.in_bps;
    rep.total_out_bps += row.out_bps;
  }
  last_sample_ = cur;
  last_sample_at_ = now;
  return rep;
}

std::vector<NamespaceView> GroundStation::namespaces() const {
  std::vector<NamespaceView> out;
  const auto table = bus_.namespaces(node_);
  for (const auto& [ns, live] : live_) {
    NamespaceView v{ns, 0.0, table.count(ns) > 0};
    if (const auto ls = bus_.last_seen(node_, ns)) v.last_seen = *ls;
    out.push_back(std::move(v));
  }
  return out;
}

Selection GroundStation::select(std::optional<std::string> name) {
  selection_.selected = std::move(name);
  selection_.stale = false;
  if (selection_.selected) {
    const auto table = bus_.namespaces(node_);
    selection_.stale = table.count(*selection_.selected) == 0 || !is_rover_ns(*selection_.selected);
  }
  return selection_;
}

ForwardResult GroundStation::forward_command(const Command& cmd) {
  ForwardResult out;
  if (!selection_.selected) {
    out.reason = "no rover selected";
    return out;
  }
  const std::string ns = *selection_.selected;
  // Liveness is re-checked at send time: a rover can expire after selection.
  const auto table = bus_.namespaces(node_);
  selection_.stale = table.count(ns) == 0 || !is_rover_ns(ns);
  if (selection_.stale) {
    out.reason = "selected rover " + ns + " is not live";
    return out;
  }
  const double now = kernel_.now_seconds();
  Bytes payload;
  std::string_view name;
  comms::Qos qos = comms::Qos::kReliable;
  switch (cmd.kind) {
    case CommandKind::kTeleop:
      if (now - last_teleop_at_ < options_.teleop_min_interval_s - 1e-9) {
        out.reason = "teleop rate limit";
        return out;
      }
      last_teleop_at_ = now;
      payload = msg::encode(cmd.teleop);
      name = msg::kCmdVelTopic;
      qos = comms::Qos::kBestEffort;
      break;
    case CommandKind::kLights:
      payload = msg::encode(msg::Lights{cmd.lights});
      name = msg::kLightsTopic;
      break;
    case CommandKind::kResetOdom:
      payload = msg::encode(msg::ResetOdom{cmd.reset});
      name = msg::kResetOdomTopic;
      break;
    case CommandKind::kReboot:
      payload = msg::encode(msg::Reboot{});
      name = msg::kRebootTopic;
      break;
    case CommandKind::kNavGoal:
      payload = msg::encode(cmd.goal);
      name = msg::kNavGoalTopic;
      break;
  }
  out.topic = msg::topic(ns, name);
  out.publish = bus_.publish(node_, out.topic, std::move(payload), qos);
  out.sent = out.publish->status == comms::PublishStatus::kSent;
  if (out.sent) ++commands_sent_;
  else out.reason = "publish refused";
  return out;
}

double GroundStation::telemetry_age(const std::string& ns) const {
  const auto it = rovers_.find(ns);
  if (it == rovers_.end() || it->second.last_envelope_at < 0.0) return std::numeric_limits<double>::infinity();
  return kernel_.now_seconds() - it->second.last_envelope_at;
}

std::optional<msg::Anchor> GroundStation::anchor_of(const std::string& ns) const {
  if (!merged_) return std::nullopt;
  for (const auto& a : merged_->anchors) {
    if (a.ns == ns) return a;
  }
  return std::nullopt;
}

std::optional<Pose2> GroundStation::merged_pose(const std::string& ns) const {
  const auto it = rovers_.find(ns);
  if (it == rovers_.end() || !it->second.odom) return std::nullopt;
  const auto a = anchor_of(ns);
  if (!a || !a->anchored) return std::nullopt;
  return a->to_global.compose(it->second.odom->pose);
}

namespace {

nlohmann::json pose_json(const Pose2& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

nlohmann::json GroundStation::snapshot() const {
  using nlohmann::json;
  const double now = kernel_.now_seconds();
  json j;
  j["type"] = "snapshot";
  j["sim_time"] = now;
  j["selection"] = {{"name", selection_.selected ? json(*selection_.selected) : json(nullptr)},
                    {"stale", selection_.stale}};
  json nss = json::array();
  for (const auto& v : namespaces()) {
    nss.push_back({{"name", v.name}, {"last_seen", v.last_seen}, {"age", now - v.last_seen}, {"live", v.live}});
  }
  j["namespaces"] = std::move(nss);

  json rovers = json::object();
  for (const auto& [ns, r] : rovers_) {
    json rj;
    rj["telemetry_age"] = finite_or_null(telemetry_age(ns));
    if (r.status) {
      rj["status"] = {{"stamp", r.status->stamp},
                      {"power", r.status->power},
                      {"headlights", r.status->headlights},
                      {"odometry_degraded", r.status->odometry_degraded},
                      {"autonomy", r.status->autonomy},
                      {"nav", msg::to_string(r.status->nav)},
                      {"map_version", r.status->map_version}};
    } else {
      rj["status"] = nullptr;
    }
    if (r.odom) {
      rj["odom"] = {{"stamp", r.odom->stamp},       {"x", r.odom->pose.x},   {"y", r.odom->pose.y},
                    {"theta", r.odom->pose.theta}, {"v", r.odom->v},        {"omega", r.odom->omega},
                    {"distance", r.odom->distance}};
    } else {
      rj["odom"] = nullptr;
    }
    if (r.nav) {
      rj["nav"] = {{"state", msg::to_string(r.nav->state)},
                   {"goal", {r.nav->goal_x, r.nav->goal_y}},
                   {"detail", r.nav->detail}};
    } else {
      rj["nav"] = nullptr;
    }
    const auto a = anchor_of(ns);
    rj["anchored"] = a && a->anchored;
    const auto mp = merged_pose(ns);
    rj["merged_pose"] = mp ? pose_json(*mp) : json(nullptr);
    if (!r.map_grid.empty()) {
      rj["map"] = {{"version", r.map_version}, {"grid", base64_encode(r.map_grid)}};
    } else {
      rj["map"] = nullptr;
    }
    json hops = json::array();
    if (const auto e = bus_.namespaces(node_); e.count(ns)) {
      for (auto n : net_.path(node_, e.at(ns).node)) hops.push_back(net_.name(n));
    }
    rj["hops"] = std::move(hops);
    if (options_.omniscient && r.truth) rj["truth"] = pose_json(*r.truth);
    rovers[ns] = std::move(rj);
  }
  j["rovers"] = std::move(rovers);

  if (merged_) {
    json anchors = json::array();
    for (const auto& a : merged_->anchors) {
      anchors.push_back({{"ns", a.ns},
                         {"anchored", a.anchored},
                         {"x", a.to_global.x},
                         {"y", a.to_global.y},
                         {"theta", a.to_global.theta},
                         {"overlap", a.overlap}});
    }
    j["merged"] = {{"version", merged_->version},
                   {"stamp", merged_->stamp},
                   {"grid", base64_encode(merged_->grid)},
                   {"anchors", std::move(anchors)}};
  } else {
    j["merged"] = nullptr;
  }

  json bw;
  bw["at"] = bandwidth_.at;
  bw["window"] = bandwidth_.window_s;
  bw["total_in_bps"] = bandwidth_.total_in_bps;
  bw["total_out_bps"] = bandwidth_.total_out_bps;
  json bwns = json::object();
  for (const auto& [ns, row] : bandwidth_.namespaces) {
    json topics = json::object();
    for (const auto& [t, c] : row.topics) topics[t] = {{"in", c.in}, {"out", c.out}};
    bwns[ns] = {{"in_bps", row.in_bps},
                {"out_bps", row.out_bps},
                {"bytes_in", row.bytes_in},
                {"bytes_out", row.bytes_out},
                {"topics", std::move(topics)}};
  }
  bw["namespaces"] = std::move(bwns);
  j["bandwidth"] = std::move(bw);

  json ev = json::array();
  for (const auto& e : ticker_) ev.push_back({{"at", e.at}, {"text", e.text}});
  j["events"] = std::move(ev);
  return j;
}

}  // namespace lunasim::ground
