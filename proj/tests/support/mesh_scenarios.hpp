#pragma once

#include <cmath>
#include <cstdint>

#include "lunasim/mesh/network.hpp"
#include "lunasim/sim/kernel.hpp"

namespace testing {

// Ground station at the origin, rover 220 m away on the x axis, relay 130 m
// from the ground station and 100 m from the rover.
struct Fig6Geometry {
  lunasim::Vec2 gs{0.0, 0.0};
  lunasim::Vec2 rover{220.0, 0.0};
  lunasim::Vec2 relay;
  Fig6Geometry() {
    const double x = (130.0 * 130.0 - 100.0 * 100.0 + 220.0 * 220.0) / (2.0 * 220.0);
    relay = {x, std::sqrt(130.0 * 130.0 - x * x)};
  }
};

struct GoodputResult {
  double goodput_bps = 0.0;
  std::uint64_t offered = 0;
  std::uint64_t delivered = 0;
  int route_hops = 0;
};

// Offers a constant best-effort stream rover -> ground station and counts
// payload bits delivered during a `window` second measurement interval that
// starts after a warm-up.
inline GoodputResult measure_goodput(bool with_relay, std::uint64_t seed, double window = 60.0,
                                     double offered_bps = 256e3, std::uint32_t frame_bytes = 1500,
                                     std::uint32_t header_bytes = 64) {
  using namespace lunasim;
  sim::Kernel k(seed);
  mesh::MeshNetwork net(k);
  const Fig6Geometry g;
  const auto gs = net.add_node("ground_station", g.gs);
  const auto rover = net.add_node("rover", g.rover);
  if (with_relay) net.add_node("relay", g.relay);
  net.start();

  const double warmup = 2.0;
  GoodputResult out;
  net.set_delivery_handler(gs, [&](const mesh::Frame& f) {
    const double t = k.now_seconds();
    if (t >= warmup && t < warmup + window) {
      out.delivered += 1;
      out.goodput_bps += 8.0 * (f.bytes - header_bytes);
    }
  });
  const auto h = k.register_handler("traffic");
  const double period = 8.0 * frame_bytes / offered_bps;
  const auto n_frames = static_cast<std::uint64_t>(std::ceil((warmup + window) / period));
  for (std::uint64_t i = 0; i < n_frames; ++i) {
    k.schedule(i * period, h, [&, i] {
      mesh::Frame f;
      f.bytes = frame_bytes;
      f.account = "rover";
      net.send(rover, gs, std::move(f));
      if (k.now_seconds() >= warmup) out.offered += 1;
    });
  }
  k.run_until(warmup + window);
  out.goodput_bps /= window;
  out.route_hops = static_cast<int>(net.path(rover, gs).size()) - 1;
  return out;
}

}  // namespace testing
