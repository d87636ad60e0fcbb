#pragma once

// Randomised map pairs for the merge gate. Each map knows a vertical strip
// of the arena (full height); the true overlap ratio follows from the strip
// intervals alone, so labels do not depend on the code under test.

#include <algorithm>
#include <numbers>

#include "lunasim/mapping/features.hpp"
#include "synthetic.hpp"

namespace lunasim::testing {

struct MapPair {
  mapping::OccupancyGrid a;
  mapping::OccupancyGrid b;
  Pose2 b_to_a;
  double true_overlap = 0.0;
  bool above_gate = false;
};

inline constexpr double kPairArenaW = 40.0;
inline constexpr double kPairArenaH = 30.0;

// Analytic overlap of two full-height strips [a0, a1] and [b0, b1] inside
// an arena of width W. Boundary cells are known to both maps, which is the
// only term besides the strip intersection.
inline double strip_overlap(double a0, double a1, double b0, double b1) {
  const double shared = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  return shared / std::min(a1 - a0, b1 - b0);
}

inline MapPair make_map_pair(sim::RngStream& rng, bool above_gate) {
  const double W = kPairArenaW;
  const double H = kPairArenaH;
  const double target = above_gate ? rng.uniform(0.25, 0.8) : rng.uniform(0.05, 0.15);
  const double wa = rng.uniform(14.0, 20.0);
  const double wb = rng.uniform(14.0, 20.0);
  const double shared = target * std::min(wa, wb);
  const double a0 = rng.uniform(1.0, W - 1.0 - (wa + wb - shared));
  const double a1 = a0 + wa;
  const double b0 = a1 - shared;
  const double b1 = b0 + wb;

  world::ArenaSpec spec = random_arena(rng, W, H, 60, 1.0, 1.0, W - 1.0, H - 1.0);
  // Dense cluster in the shared strip so the true alignment is detectable.
  const auto cluster = random_arena(rng, W, H, 18, b0 + 0.2, 1.0, a1 - 0.2, H - 1.0);
  spec.obstacles.insert(spec.obstacles.end(), cluster.obstacles.begin(), cluster.obstacles.end());
  const auto truth = world::load_world(spec);

  MapPair p;
  p.above_gate = above_gate;
  p.b_to_a = {W / 2 + rng.uniform(-2.0, 2.0), H / 2 + rng.uniform(-2.0, 2.0),
              rng.uniform(-std::numbers::pi, std::numbers::pi)};
  const double r = truth.resolution();
  p.a = observe(truth, {}, {}, truth.cols(), truth.rows(),
                [=](Vec2 w) { return w.x >= a0 && w.x < a1; });
  const int side = static_cast<int>(std::ceil(54.0 / r));
  p.b = observe(truth, p.b_to_a, {-27.0, -27.0, 0.0}, side, side,
                [=](Vec2 w) { return w.x >= b0 && w.x < b1; });
  p.true_overlap = strip_overlap(a0, a1, b0, b1);
  return p;
}

// Features of A and B that coincide (one to one, 0.2 m) under the true
// transform.
inline int colocated_features(const MapPair& p, const mapping::FeatureParams& fp = {}) {
  const auto fa = mapping::extract_features(p.a, fp);
  const auto fb = mapping::extract_features(p.b, fp);
  std::vector<char> used(fa.size(), 0);
  int n = 0;
  for (const auto& f : fb) {
    const Vec2 q = p.b_to_a.apply(f.position);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      if (!used[i] && distance(q, fa[i].position) < 0.2) {
        used[i] = 1;
        ++n;
        break;
      }
    }
  }
  return n;
}

}  // namespace lunasim::testing
