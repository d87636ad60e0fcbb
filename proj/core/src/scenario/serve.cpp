#include "lunasim/scenario/serve.hpp"

#include <chrono>
#include <thread>

#include "lunasim/ground/gateway_server.hpp"

namespace lunasim::scenario {

LiveControl::LiveControl(Mission& mission, double realtime_factor, bool paused)
    : mission_(mission), paused_(paused), factor_(realtime_factor) {}

void LiveControl::handle(const ground::ClientMessage& m) {
  switch (m.type) {
    case ground::ClientType::kHello: break;
    case ground::ClientType::kPause: paused_.store(true); break;
    case ground::ClientType::kResume: paused_.store(false); break;
    case ground::ClientType::kSetRate:
      if (m.realtime_factor) factor_.store(*m.realtime_factor);
      break;
    case ground::ClientType::kSelect: {
      queued_.fetch_add(1);
      mission_.kernel().post_external([this, name = m.select] { mission_.ground().select(name); });
      break;
    }
    case ground::ClientType::kCommand: {
      queued_.fetch_add(1);
      mission_.kernel().post_external([this, cmd = m.command] { mission_.ground().forward_command(cmd); });
      break;
    }
  }
}

void run_paced(Mission& mission, const PacedOptions& options) {
  using clock = std::chrono::steady_clock;
  mission.start();
  LiveControl control(mission, options.realtime_factor, options.start_paused);
  std::optional<ground::GatewayServer> server;
  auto snapshot = [&] {
    auto s = mission.ground().snapshot();
    s["paused"] = control.paused();
    s["realtime_factor"] = control.realtime_factor();
    s["duration"] = mission.spec().duration_s;
    return s;
  };
  if (options.port) {
    server.emplace(ground::GatewayServer::Options{options.address, *options.port, options.snapshot_hz},
                   [&control](const ground::ClientMessage& m, std::uint64_t) { control.handle(m); });
    server->publish(snapshot());
    server->start();
    if (options.on_listening) options.on_listening(server->port());
  }

  const auto slice = std::chrono::duration<double>(options.slice_s);
  auto last = clock::now();
  double next_publish = 0.0;
  while (!mission.done()) {
    if (options.stop && options.stop->load()) break;
    std::this_thread::sleep_for(slice);
    const auto t = clock::now();
    const double wall = std::chrono::duration<double>(t - last).count();
    last = t;
    if (control.paused()) {
      if (server) server->publish(snapshot());
      continue;
    }
    mission.kernel().drain_ingress();
    mission.advance_to(mission.now() + wall * control.realtime_factor());
    const double wall_now = std::chrono::duration<double>(t.time_since_epoch()).count();
    if (server && wall_now >= next_publish) {
      server->publish(snapshot());
      next_publish = wall_now + 1.0 / options.snapshot_hz;
    }
  }
  if (server) {
    server->publish(snapshot());
    server->stop();
  }
  mission.finish();
}

}  // namespace lunasim::scenario
