#include "lunasim/scenario/mission.hpp"

#include <cmath>

namespace lunasim::scenario {

namespace {

std::int64_t to_us(double t) { return static_cast<std::int64_t>(std::llround(t * 1e6)); }

nlohmann::json wire_json(const mesh::WireCounters& w) {
  return {{"frames", w.frames}, {"bytes", w.bytes}, {"data_bytes", w.data_bytes}, {"control_bytes", w.control_bytes}};
}

}  // namespace

Mission::Mission(std::string source_text, RunOptions options)
    : source_(std::move(source_text)), options_(options), spec_(parse_scenario_text(source_)) {
  seed_ = options_.seed.value_or(spec_.seed);
  spec_.seed = seed_;
  truth_ = std::make_unique<world::GroundTruthGrid>(world::load_world(spec_.world));
  kernel_ = std::make_unique<sim::Kernel>(seed_);
  net_ = std::make_unique<mesh::MeshNetwork>(*kernel_, spec_.net, spec_.link_curve);
  bus_ = std::make_unique<comms::CommsBus>(*kernel_, *net_, spec_.comms);

  const auto lander_node = net_->add_node("lander", spec_.lander.position);
  gs_node_ = net_->add_node("ground_station", {0.0, 0.0}, false);
  net_->add_fixed_link(lander_node, gs_node_,
                       {spec_.ground.rate_bps, spec_.ground.frame_error, spec_.ground.one_way_delay_s});
  bus_->attach(lander_node, {"lander"});
  bus_->attach(gs_node_, {"ground_station"});
  for (const auto& r : spec_.rovers) {
    const auto n = net_->add_node(r.name, r.start.position());
    bus_->attach(n, {r.name});
    rovers_.push_back(std::make_unique<RoverAgent>(*kernel_, *bus_, n, *truth_, r, spec_.mission));
  }
  bus_->set_gateway(lander_node, gs_node_);
  lander_ = std::make_unique<LanderAgent>(*kernel_, *bus_, lander_node, spec_);

  ground::GroundStationOptions gopt;
  gopt.omniscient = options_.omniscient;
  gopt.bandwidth_enabled = options_.bandwidth_monitor;
  gs_ = std::make_unique<ground::GroundStation>(*kernel_, *bus_, *net_, gs_node_, gopt);
  gs_->set_truth_provider([this](const std::string& ns) -> std::optional<Pose2> {
    for (const auto& r : rovers_) {
      if (r->name() == ns) return r->plant().true_pose();
    }
    return std::nullopt;
  });
  script_handler_ = kernel_->register_handler("operator");
  metrics_handler_ = kernel_->register_handler("metrics");
}

Mission::~Mission() = default;

RoverAgent& Mission::rover(std::string_view name) {
  for (auto& r : rovers_) {
    if (r->name() == name) return *r;
  }
  throw std::out_of_range("no rover named " + std::string(name));
}

world::CoverageCount Mission::coverage() const { return world::coverage_count(lander_->merged(), *truth_); }

void Mission::start() {
  if (started_) return;
  started_ = true;

  // Radio positions follow the rovers; the sync runs just ahead of each
  // link sample.
  positions_handler_ = kernel_->register_handler("positions");
  kernel_->schedule(0.0, positions_handler_, [this] { sync_positions(); });

  net_->start();
  bus_->start();
  lander_->start();
  for (auto& r : rovers_) r->start();
  gs_->start();

  for (const auto& pattern : {"*/odom", "*/status", "*/nav_status", "*/map", "lander/merged_map"}) {
    bus_->subscribe(gs_node_, pattern, [this](const comms::Envelope& e) {
      const auto lat = static_cast<std::uint64_t>(std::max<std::int64_t>(0, to_us(e.delivered_at) - to_us(e.sent_at)));
      gs_delivered_ += 1;
      gs_latency_us_sum_ += lat;
      gs_latency_us_max_ = std::max(gs_latency_us_max_, lat);
    });
  }

  for (std::size_t i = 0; i < spec_.events.size(); ++i) schedule_event(spec_.events[i]);
  kernel_->schedule(spec_.mission.metrics_period_s, metrics_handler_, [this] { sample(); });

  log_.append({{"type", "header"},
               {"format", kMetricsFormat},
               {"version", kArtifactVersion},
               {"seed", seed_},
               {"options", {{"omniscient", options_.omniscient}, {"bandwidth_monitor", options_.bandwidth_monitor}}},
               {"scenario", to_json(spec_)},
               {"scenario_text", source_}});
}

void Mission::sync_positions() {
  for (const auto& r : rovers_) net_->set_position(r->node(), r->plant().true_pose().position());
  kernel_->schedule_after(spec_.net.link_sample_period_s, positions_handler_, [this] { sync_positions(); });
}

void Mission::schedule_event(const TimedEvent& ev) {
  auto record = [this, ev](nlohmann::json extra) {
    nlohmann::json j{{"type", "event"}, {"t_us", to_us(now())}, {"kind", to_string(ev.kind)}};
    if (!ev.rover.empty()) j["rover"] = ev.rover;
    if (extra.is_object()) j.update(extra);
    events_fired_ += 1;
    log_.append(j);
  };
  switch (ev.kind) {
    case EventKind::kBlackout: {
      net_->inject_blackout(ev.at, ev.until, ev.links);
      kernel_->schedule(ev.at, script_handler_, [record, ev] {
        nlohmann::json links = nlohmann::json::array();
        for (const auto& l : ev.links) links.push_back({l.a, l.b});
        record({{"phase", "start"}, {"until_us", to_us(ev.until)}, {"links", links}});
      });
      kernel_->schedule(ev.until, script_handler_, [record] { record({{"phase", "end"}}); });
      break;
    }
    case EventKind::kShutdownRover:
      kernel_->schedule(ev.at, script_handler_, [this, record, ev] {
        rover(ev.rover).shutdown();
        record({});
      });
      break;
    case EventKind::kDisableAutonomy:
      kernel_->schedule(ev.at, script_handler_, [this, record, ev] {
        rover(ev.rover).disable_autonomy();
        record({});
      });
      break;
    case EventKind::kRebootRover:
    case EventKind::kScriptGoal:
    case EventKind::kResetOdom:
    case EventKind::kLights:
      kernel_->schedule(ev.at, script_handler_, [this, record, ev] {
        ground::Command c;
        if (ev.kind == EventKind::kRebootRover) {
          c.kind = ground::CommandKind::kReboot;
        } else if (ev.kind == EventKind::kScriptGoal) {
          c.kind = ground::CommandKind::kNavGoal;
          c.goal = {ev.x, ev.y, ev.tolerance};
        } else if (ev.kind == EventKind::kResetOdom) {
          c.kind = ground::CommandKind::kResetOdom;
          c.reset = {ev.x, ev.y, ev.theta};
        } else {
          c.kind = ground::CommandKind::kLights;
          c.lights = ev.on;
        }
        gs_->select(ev.rover);
        const auto r = gs_->forward_command(c);
        if (r.sent) script_.commands_sent += 1;
        else script_.commands_held += 1;
        nlohmann::json extra{{"sent", r.sent}};
        if (!r.sent) extra["reason"] = r.reason;
        record(extra);
      });
      break;
    case EventKind::kScriptTeleop: {
      auto stats = std::make_shared<ScriptStats>();
      const double period = 1.0 / spec_.mission.teleop_rate_hz;
      const auto n = static_cast<long>(std::floor(ev.duration / period + 1e-9));
      kernel_->schedule(ev.at, script_handler_, [record, ev] {
        record({{"phase", "start"}, {"v", ev.v}, {"omega", ev.omega}, {"duration", ev.duration}});
      });
      for (long k = 0; k < n; ++k) {
        kernel_->schedule(ev.at + static_cast<double>(k) * period, script_handler_, [this, ev, stats] {
          ground::Command c;
          c.kind = ground::CommandKind::kTeleop;
          c.teleop = {ev.v, ev.omega};
          gs_->select(ev.rover);
          if (gs_->forward_command(c).sent) {
            stats->commands_sent += 1;
            script_.commands_sent += 1;
          } else {
            stats->commands_held += 1;
            script_.commands_held += 1;
          }
        });
      }
      kernel_->schedule(ev.at + ev.duration, script_handler_, [record, stats] {
        record({{"phase", "end"}, {"sent", stats->commands_sent}, {"held", stats->commands_held}});
      });
      break;
    }
  }
}

nlohmann::json Mission::counters_json() const {
  const auto cov = coverage();
  nlohmann::json ns_bytes = nlohmann::json::object();
  for (const auto& [acct, w] : net_->wire_by_account()) ns_bytes[acct] = w.bytes;
  nlohmann::json comms_events = nlohmann::json::object();
  for (const auto& e : bus_->events()) {
    auto& slot = comms_events[std::string(comms::to_string(e.kind))];
    slot = (slot.is_null() ? 0 : slot.get<std::uint64_t>()) + e.count;
  }
  nlohmann::json rovers = nlohmann::json::object();
  for (const auto& r : rovers_) {
    const auto& p = r->plant();
    rovers[r->name()] = {
        {"power", rover::to_string(p.power_state())},
        {"nav", msg::to_string(r->navigator().state())},
        {"autonomy", r->autonomy()},
        {"map_version", r->map_version()},
        {"travelled_mm", std::llround(p.distance_travelled() * 1000.0)},
        {"odom_error_mm", std::llround(p.odometry_error() * 1000.0)},
        {"blocked_steps", r->counters().blocked_steps},
        {"commands", r->counters().cmd_vel + r->counters().lights + r->counters().nav_goals + r->counters().resets +
                         r->counters().reboots},
    };
  }
  nlohmann::json merge = nlohmann::json::object();
  for (const auto& [ns, st] : lander_->rovers()) {
    merge[ns] = {{"map_version", st.version},
                 {"anchored", st.anchor.has_value()},
                 {"match_attempts", st.match_attempts},
                 {"last_match", mapping::to_string(st.last_match)}};
  }
  const auto flow = net_->flow();
  const auto* gb = bus_->gateway_buffer();
  return {
      {"coverage", {{"known_free", cov.known_free}, {"free", cov.free}}},
      {"wire", wire_json(net_->wire())},
      {"ns_bytes", ns_bytes},
      {"route_changes", net_->route_changes()},
      {"frames", {{"sent", flow.sent}, {"delivered", flow.delivered}, {"dropped", flow.dropped}}},
      {"gs", {{"delivered", gs_delivered_}, {"latency_us_sum", gs_latency_us_sum_}, {"latency_us_max", gs_latency_us_max_},
              {"commands_sent", gs_->commands_sent()}}},
      {"gateway_buffer_bytes", gb ? gb->bytes() : 0},
      {"comms_events", comms_events},
      {"rovers", rovers},
      {"merge", merge},
  };
}

void Mission::sample() {
  nlohmann::json j{{"type", "sample"}, {"t_us", to_us(now())}};
  j.update(counters_json());
  log_.append(j);
  if (now() + spec_.mission.metrics_period_s <= spec_.duration_s + 1e-9) {
    kernel_->schedule_after(spec_.mission.metrics_period_s, metrics_handler_, [this] { sample(); });
  }
}

void Mission::advance_to(double t) {
  if (!started_) start();
  kernel_->run_until(std::min(t, spec_.duration_s));
}

bool Mission::done() const { return kernel_->now_seconds() >= spec_.duration_s; }

void Mission::finish() {
  if (finished_) return;
  if (!started_) start();
  finished_ = true;
  const auto cov = coverage();
  nlohmann::json j{{"type", "summary"}, {"t_us", to_us(now())}};
  j.update(counters_json());
  j["coverage_fraction"] = cov.fraction();
  j["events_fired"] = events_fired_;
  j["script"] = {{"commands_sent", script_.commands_sent}, {"commands_held", script_.commands_held}};
  j["kernel"] = {{"executed", kernel_->executed()}, {"digest", checksum_hex(kernel_->log_digest())}};
  j["lines"] = log_.lines().size();
  j["checksum"] = checksum_hex(log_.checksum());
  log_.append(j);
}

void Mission::run() {
  start();
  advance_to(spec_.duration_s);
  finish();
}

std::string_view to_string(ReplayVerdict::Status s) {
  switch (s) {
    case ReplayVerdict::Status::kIdentical: return "identical";
    case ReplayVerdict::Status::kDiverged: return "diverged";
    case ReplayVerdict::Status::kRefused: return "refused";
  }
  return "?";
}

ReplayVerdict replay(const std::vector<std::string>& recorded) {
  ReplayVerdict v;
  if (recorded.empty()) {
    v.message = "empty log";
    return v;
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(recorded.front());
  } catch (const nlohmann::json::exception&) {
    v.status = ReplayVerdict::Status::kDiverged;
    v.line = 1;
    v.expected = recorded.front();
    v.message = "header does not parse";
    return v;
  }
  if (!header.is_object() || header.value("type", "") != "header") {
    v.message = "first line is not a header record";
    return v;
  }
  if (header.value("format", 0) != kMetricsFormat || header.value("version", "") != kArtifactVersion) {
    v.message = "log written by " + header.value("version", std::string("unknown")) + ", this is " +
                std::string(kArtifactVersion);
    return v;
  }
  RunOptions opt;
  try {
    opt.seed = header.at("seed").get<std::uint64_t>();
    opt.omniscient = header.at("options").at("omniscient").get<bool>();
    opt.bandwidth_monitor = header.at("options").at("bandwidth_monitor").get<bool>();
    Mission m(header.at("scenario_text").get<std::string>(), opt);
    m.run();
    const auto& actual = m.log().lines();
    const std::size_t n = std::max(actual.size(), recorded.size());
    for (std::size_t i = 0; i < n; ++i) {
      const std::string* a = i < actual.size() ? &actual[i] : nullptr;
      const std::string* e = i < recorded.size() ? &recorded[i] : nullptr;
      if (a && e && *a == *e) continue;
      v.status = ReplayVerdict::Status::kDiverged;
      v.line = i + 1;
      v.expected = e ? *e : std::string();
      v.actual = a ? *a : std::string();
      v.message = !e ? "replay produced extra lines" : !a ? "recorded log has extra lines" : "line differs";
      return v;
    }
  } catch (const std::exception& ex) {
    v.status = ReplayVerdict::Status::kRefused;
    v.message = std::string("cannot rebuild run: ") + ex.what();
    return v;
  }
  v.status = ReplayVerdict::Status::kIdentical;
  v.message = "checksum " + checksum_hex(checksum_of(recorded));
  return v;
}

}  // namespace lunasim::scenario
