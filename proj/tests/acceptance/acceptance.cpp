// Runs every primary acceptance criterion and prints one line per
// criterion: PASS/FAIL, name, measured values, wall time. Exit status is the
// number of failures. Arguments select criteria by name substring.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "comms_world.hpp"
#include "graph_oracle.hpp"
#include "lunasim/comms/bus.hpp"
#include "lunasim/mapping/merge.hpp"
#include "lunasim/mesh/network.hpp"
#include "lunasim/rover/rover.hpp"
#include "lunasim/scenario/mission.hpp"
#include "lunasim/sim/rng.hpp"
#include "merge_pairs.hpp"
#include "mesh_scenarios.hpp"

using namespace lunasim;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_scenario(const char* name) {
  std::ifstream in(std::string(LUNASIM_SCENARIO_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Delivered payload frames between two static nodes `d` metres apart over
// 10 s of a 100 kbit/s offered stream.
std::uint64_t delivered_at_distance(double d) {
  sim::Kernel k(1);
  mesh::MeshNetwork net(k);
  const auto a = net.add_node("a", {0.0, 0.0});
  const auto b = net.add_node("b", {d, 0.0});
  net.start();
  std::uint64_t got = 0;
  net.set_delivery_handler(b, [&](const mesh::Frame&) { ++got; });
  const auto h = k.register_handler("traffic");
  for (int i = 0; i < 80; ++i) {
    k.schedule(i * 0.125, h, [&] {
      mesh::Frame f;
      f.bytes = 1500;
      net.send(a, b, std::move(f));
    });
  }
  k.run_until(10.0);
  return got;
}

Outcome range_gate() {
  sim::Kernel k(1);
  mesh::MeshNetwork net(k);
  const auto a = net.add_node("a", {0.0, 0.0});
  const auto near = net.add_node("near", {219.0, 0.0});
  const auto far = net.add_node("far", {0.0, 221.0});
  net.start();
  const bool up_219 = net.link(a, near).up;
  const bool up_221 = net.link(a, far).up;
  const auto got_219 = delivered_at_distance(219.0);
  const auto got_221 = delivered_at_distance(221.0);
  return {up_219 && !up_221 && got_219 > 0 && got_221 == 0,
          fmt("219 m: link %s, %llu/80 frames; 221 m: link %s, %llu/80 frames", up_219 ? "up" : "down",
              static_cast<unsigned long long>(got_219), up_221 ? "up" : "down",
              static_cast<unsigned long long>(got_221))};
}

Outcome relay_gain() {
  double lo = 1e300, hi = 0.0;
  bool two_hops = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto direct = ::testing::measure_goodput(false, seed, 60.0);
    const auto relayed = ::testing::measure_goodput(true, seed, 60.0);
    two_hops = two_hops && relayed.route_hops == 2 && direct.goodput_bps > 0.0;
    const double g = direct.goodput_bps > 0.0 ? relayed.goodput_bps / direct.goodput_bps : 0.0;
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return {two_hops && lo >= 2.0 && hi <= 10.0, fmt("gain over 3 seeds in [%.2f, %.2f], band [2, 10]", lo, hi)};
}

Outcome delay() {
  ::testing::CommsWorld w(11, {{30, 18}, {20, 25}, {28, 10}});
  std::vector<std::vector<double>> rtts(3);
  std::vector<double> sent_at(3, 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    w.bus.subscribe(w.rovers[r], "leo" + std::to_string(r + 1) + "/cmd", [](const comms::Envelope&) {});
  }
  w.bus.set_ack_observer(w.gs, [&](const std::string& topic, std::uint64_t, mesh::NodeIndex, double t) {
    const auto r = static_cast<std::size_t>(topic[3] - '1');
    rtts[r].push_back(t - sent_at[r]);
  });
  w.start();
  const auto h = w.handler("t");
  for (int i = 0; i < 6; ++i) {
    for (std::size_t r = 0; r < 3; ++r) {
      // Discovery broadcasts leave just after every even second; the bound has no
      // queueing term, so commands leave between them.
      w.kernel.schedule(10.5 + 10.0 * i + 3.0 * static_cast<double>(r), h, [&, r] {
        sent_at[r] = w.now();
        w.bus.publish(w.gs, "leo" + std::to_string(r + 1) + "/cmd", Bytes(32, 7), comms::Qos::kReliable);
      });
    }
  }
  w.kernel.run_until(80.0);
  // 96 B envelope out and a 64 B ack back over the 10 Mbit/s ground link
  // and one radio hop at 54 Mbit/s (every rover is within 50 m).
  auto hop = [](double bytes, double rate) { return 1e-4 + 8.0 * bytes / rate; };
  const double ser = hop(96, 10e6) + hop(96, 54e6) + hop(64, 54e6) + hop(64, 10e6);
  const double quantum = 20e-6;
  double lo = 1e300, hi = 0.0;
  bool ok = true;
  for (const auto& v : rtts) {
    ok = ok && v.size() == 6;
    // The first command to each rover also pays for route discovery.
    for (std::size_t i = 1; i < v.size(); ++i) {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  }
  ok = ok && lo >= 2.0 && hi <= 2.0 + ser + quantum;
  return {ok, fmt("RTT in [%.6f, %.6f] s, bound [2.0, %.6f] s", lo, hi, 2.0 + ser + quantum)};
}

Outcome rerouting() {
  sim::Kernel k(6);
  mesh::MeshNetwork net(k);
  comms::CommsBus bus(k, net);
  const auto a = net.add_node("a", {0, 0});
  const auto r1 = net.add_node("r1", {150, 0});
  const auto r2 = net.add_node("r2", {150, -60});
  const auto b = net.add_node("b", {300, 0});
  bus.attach(a, {"a"});
  bus.attach(b, {"b"});
  std::vector<std::uint64_t> seqs;
  std::vector<std::pair<double, double>> times;  // (published, delivered)
  bus.subscribe(b, "a/data", [&](const comms::Envelope& e) {
    seqs.push_back(e.seq);
    times.emplace_back(e.sent_at, e.delivered_at);
  });
  net.start();
  bus.start();
  const auto h = k.register_handler("t");
  std::uint64_t published = 0;
  for (int i = 0; i < 120; ++i) {
    k.schedule(5.0 + i * 0.5, h, [&] {
      if (bus.publish(a, "a/data", Bytes(400, 1), comms::Qos::kReliable).status == comms::PublishStatus::kSent) {
        ++published;
      }
    });
  }
  const double t_down = 30.0;
  k.run_until(t_down);
  const bool via_r1 = net.path(a, b) == std::vector<mesh::NodeIndex>{a, r1, b};
  net.on_node_down(r1);
  k.run_until(120.0);
  const bool via_r2 = net.path(a, b) == std::vector<mesh::NodeIndex>{a, r2, b};
  double restored = 1e300;
  for (const auto& [sent, got] : times) {
    if (sent > t_down) {
      restored = got - t_down;
      break;
    }
  }
  bool consecutive = seqs.size() == published;
  for (std::size_t i = 0; i < seqs.size(); ++i) consecutive = consecutive && seqs[i] == i + 1;
  const bool ok = via_r1 && via_r2 && restored <= 10.0 && consecutive && bus.gaps(b) == 0;
  return {ok, fmt("path via r1 before, via r2 after; first post-failure delivery %.3f s after shutdown; "
                  "%zu/%llu in order, %llu gaps",
                  restored, seqs.size(), static_cast<unsigned long long>(published),
                  static_cast<unsigned long long>(bus.gaps(b)))};
}

Outcome blackout_store_and_forward() {
  ::testing::CommsWorld w(9);
  const double t0 = 40.0, t1 = 100.0;
  std::uint64_t inside = 0;
  std::vector<std::uint64_t> maps;
  auto count = [&](const comms::Envelope& e) {
    if (e.delivered_at >= t0 && e.delivered_at <= t1) ++inside;
  };
  w.bus.subscribe(w.gs, "*/map", [&](const comms::Envelope& e) {
    count(e);
    maps.push_back(e.seq);
  });
  w.bus.subscribe(w.gs, "*/odom", count);
  w.bus.subscribe(w.gs, "*/status", count);
  w.start();
  w.net.inject_blackout(t0, t1, {{"lander", "ground_station"}});
  const auto h = w.handler("t");
  std::vector<std::uint64_t> sent;
  std::uint64_t queued_during = 0;
  for (int i = 0; i < 70; ++i) {
    w.kernel.schedule(5.0 + i * 2.0, h, [&, i] {
      const auto r = w.bus.publish(w.rovers[0], "leo1/map", ::testing::pattern_bytes(5000, i), comms::Qos::kReliable);
      if (r.status == comms::PublishStatus::kSent) sent.push_back(r.seq);
      if (w.now() >= t0 && w.now() <= t1) ++queued_during;
    });
  }
  for (int i = 0; i < 700; ++i) {
    w.kernel.schedule(5.0 + i * 0.2, h, [&] {
      w.bus.publish(w.rovers[0], "leo1/odom", Bytes(56, 0), comms::Qos::kBestEffort);
      w.bus.publish(w.rovers[0], "leo1/status", Bytes(40, 0), comms::Qos::kBestEffort);
    });
  }
  w.kernel.run_until(170.0);
  const bool ok = inside == 0 && queued_during > 0 && maps == sent && w.bus.gaps(w.gs) == 0;
  return {ok, fmt("%llu envelopes at GS during the 60 s window; %zu/%zu maps delivered in order "
                  "(%llu published during the blackout), %llu gaps",
                  static_cast<unsigned long long>(inside), maps.size(), sent.size(),
                  static_cast<unsigned long long>(queued_during),
                  static_cast<unsigned long long>(w.bus.gaps(w.gs)))};
}

Outcome merge_gate() {
  sim::RngStream rng(2024, "acceptance.merge");
  int above = 0, above_ok = 0, below = 0, below_ok = 0, thin = 0;
  double worst_t = 0.0, worst_deg = 0.0;
  for (int i = 0; i < 100; ++i) {
    const bool want_above = i % 2 == 0;
    const auto p = lunasim::testing::make_map_pair(rng, want_above);
    const auto res = mapping::match_and_estimate(p.a, p.b);
    if (p.true_overlap >= 0.20) {
      ++above;
      if (lunasim::testing::colocated_features(p) < 10) ++thin;
      if (res.accepted()) {
        const auto& t = res.estimate->transform;
        const double dt = std::hypot(t.x - p.b_to_a.x, t.y - p.b_to_a.y);
        const double dr = lunasim::testing::angle_error_deg(t.theta, p.b_to_a.theta);
        worst_t = std::max(worst_t, dt);
        worst_deg = std::max(worst_deg, dr);
        if (dt <= p.a.resolution() && dr <= 2.0) ++above_ok;
      }
    } else {
      ++below;
      if (res.status == mapping::MergeStatus::kInsufficientOverlap) ++below_ok;
    }
  }
  const bool ok = above == 50 && below == 50 && thin == 0 && above_ok == above && below_ok == below;
  return {ok, fmt("above gate %d/%d recovered (worst %.3f m, %.2f deg; %d with <10 colocated features); "
                  "below gate %d/%d refused for overlap",
                  above_ok, above, worst_t, worst_deg, thin, below_ok, below)};
}

struct CanonicalRun {
  double coverage = 0.0;
  double sim_s = 0.0;
  double wall_s = 0.0;
  std::uint64_t checksum = 0;
  std::size_t rovers = 0, blackouts = 0, shutdowns = 0, disables = 0, teleops = 0;
};

CanonicalRun run_canonical() {
  const auto t0 = std::chrono::steady_clock::now();
  scenario::Mission m(read_scenario("esa_esric_final.scn"));
  m.run();
  CanonicalRun r;
  r.wall_s = wall_since(t0);
  r.coverage = m.coverage().fraction();
  r.sim_s = m.now();
  r.checksum = m.log().checksum();
  r.rovers = m.spec().rovers.size();
  for (const auto& e : m.spec().events) {
    r.blackouts += e.kind == scenario::EventKind::kBlackout;
    r.shutdowns += e.kind == scenario::EventKind::kShutdownRover;
    r.disables += e.kind == scenario::EventKind::kDisableAutonomy;
    r.teleops += e.kind == scenario::EventKind::kScriptTeleop;
  }
  return r;
}

std::optional<CanonicalRun> first_canonical;

const CanonicalRun& canonical() {
  if (!first_canonical) first_canonical = run_canonical();
  return *first_canonical;
}

Outcome coverage_mission() {
  const auto& r = canonical();
  const bool shape = r.rovers == 3 && r.blackouts == 2 && r.shutdowns == 1 && r.disables == 1 && r.teleops > 0;
  const bool ok = shape && r.coverage >= 0.60 && r.sim_s <= 4 * 3600.0 && r.wall_s < 300.0;
  return {ok, fmt("coverage %.4f after %.0f s simulated, %.1f s wall; %zu rovers, %zu blackouts, %zu shutdown, "
                  "%zu autonomy failure, %zu teleop segments",
                  r.coverage, r.sim_s, r.wall_s, r.rovers, r.blackouts, r.shutdowns, r.disables, r.teleops)};
}

Outcome odometry() {
  const double rate = rover::RoverConfig{}.odometry.drift_rate;
  double worst = 0.0;
  bool degraded = false, reset_exact = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    rover::RoverConfig c;
    c.name = "leo1";
    c.start = {5.0, 5.0, 0.0};
    rover::Rover r(c, sim::RngStream(seed, "acceptance.odom"));
    // Control period steps of 0.2 s: 2000 steps of 1 cm.
    for (int i = 0; i < 2000; ++i) {
      r.apply_drive({0.05, 0.0}, 0.2);
      const Pose2 o = r.odom_pose();
      const Pose2 t = r.true_pose();
      worst = std::max(worst, std::hypot(o.x - t.x, o.y - t.y) / (rate * 20.0));
      degraded = degraded || r.odometry_degraded();
    }
    r.reset_odometry(r.true_pose());
    const Pose2 o = r.odom_pose();
    const Pose2 t = r.true_pose();
    reset_exact = reset_exact && o.x == t.x && o.y == t.y && o.theta == t.theta && r.odometry_error() == 0.0;
  }
  const bool ok = worst <= 1.0 + 1e-9 && !degraded && reset_exact;
  return {ok, fmt("worst |odom - true| = %.3f of the %.2f m bound over 20 seeds; degraded %s; reset %s", worst,
                  rate * 20.0, degraded ? "flagged" : "never", reset_exact ? "exact" : "inexact")};
}

Outcome routing_optimality() {
  sim::RngStream rng(4242, "acceptance.routing");
  int checked = 0, optimal = 0, unreachable_ok = 0, unreachable = 0;
  std::uint64_t loops = 0;
  for (int trial = 0; trial < 200; ++trial) {
    sim::Kernel k(static_cast<std::uint64_t>(trial) + 1);
    mesh::MeshNetwork net(k);
    const int n = 2 + static_cast<int>(rng.below(7));
    std::vector<Vec2> pts;
    for (int i = 0; i < n; ++i) {
      pts.push_back({rng.uniform(0.0, 400.0), rng.uniform(0.0, 400.0)});
      net.add_node("n" + std::to_string(i), pts.back());
    }
    net.start();
    const auto src = static_cast<mesh::NodeIndex>(rng.below(static_cast<std::uint64_t>(n)));
    auto dst = static_cast<mesh::NodeIndex>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (dst >= src) ++dst;
    net.discover(src, dst);
    k.run_until(0.9);
    const auto dist = ::testing::dijkstra(::testing::airtime_weights(pts), src);
    const auto r = net.route(src, dst);
    if (std::isinf(dist[dst])) {
      ++unreachable;
      if (!r) ++unreachable_ok;
    } else {
      ++checked;
      if (r && std::abs(r->metric - dist[dst]) <= 1e-9 * dist[dst]) ++optimal;
    }
    loops += net.loop_violations();
  }
  const bool ok = optimal == checked && unreachable_ok == unreachable && loops == 0;
  return {ok, fmt("%d/%d reachable pairs at the Dijkstra optimum, %d/%d unreachable pairs without a route, "
                  "%llu loop violations",
                  optimal, checked, unreachable_ok, unreachable, static_cast<unsigned long long>(loops))};
}

Outcome determinism() {
  const auto first = canonical();
  const auto second = run_canonical();
  return {first.checksum == second.checksum,
          fmt("checksums %s and %s", scenario::checksum_hex(first.checksum).c_str(),
              scenario::checksum_hex(second.checksum).c_str())};
}

Outcome monitoring_neutrality() {
  auto wire = [](const std::string& text, bool monitor, double until) {
    scenario::RunOptions o;
    o.bandwidth_monitor = monitor;
    scenario::Mission m(text, o);
    m.start();
    m.advance_to(until);
    return m.net().wire();
  };
  bool ok = true;
  std::string detail;
  for (const auto& [file, until] : {std::pair{"minimal.scn", 600.0}, std::pair{"esa_esric_final.scn", 600.0}}) {
    const auto text = read_scenario(file);
    const auto on = wire(text, true, until);
    const auto off = wire(text, false, until);
    const bool same = on.bytes == off.bytes && on.frames == off.frames && on.data_bytes == off.data_bytes &&
                      on.control_bytes == off.control_bytes;
    ok = ok && same && on.bytes > 0;
    detail += fmt("%s%s: %llu vs %llu bytes", detail.empty() ? "" : "; ", file,
                  static_cast<unsigned long long>(on.bytes), static_cast<unsigned long long>(off.bytes));
  }
  return {ok, detail};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"range_gate", range_gate},
      {"relay_gain", relay_gain},
      {"delay", delay},
      {"rerouting", rerouting},
      {"blackout_store_and_forward", blackout_store_and_forward},
      {"merge_gate", merge_gate},
      {"coverage_mission", coverage_mission},
      {"odometry", odometry},
      {"routing_optimality", routing_optimality},
      {"determinism", determinism},
      {"monitoring_neutrality", monitoring_neutrality},
  };
  std::vector<std::string> filters(argv + 1, argv + argc);
  int failed = 0, ran = 0;
  for (const auto& c : all) {
    const std::string name = c.name;
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return name.find(f) != std::string::npos; })) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += o.pass ? 0 : 1;
    std::printf("%s  %-28s %s  [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), wall_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed;
}
