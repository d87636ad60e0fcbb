#include "lunasim/mapping/scan_integrator.hpp"

#include <algorithm>
#include <cmath>

#include "lunasim/grid_ray.hpp"

namespace lunasim::mapping {

void ScanIntegrator::integrate(OccupancyGrid& grid, const Pose2& pose, const Scan& scan) {
  if (scan.ranges.empty() || scan.max_range <= 0.0) return;
  grid.ensure_contains(pose.position(), scan.max_range + 2.0 * grid.resolution());

  if (stamp_.size() != grid.size()) {
    stamp_.assign(grid.size(), 0);
    epoch_ = 0;
  }
  // Two stamps per scan: 2e+1 marks a hit, 2e+2 a miss.
  if (epoch_ >= 0x7ffffff0U) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    epoch_ = 0;
  }
  ++epoch_;
  const std::uint32_t hit_mark = 2 * epoch_ + 1;
  const std::uint32_t miss_mark = 2 * epoch_ + 2;
  hits_.clear();
  misses_.clear();

  const Pose2 to_grid = grid.origin().inverse();
  const Vec2 start = to_grid.apply(pose.position());
  const double inv_res = 1.0 / grid.resolution();
  const double ux = start.x * inv_res;
  const double uy = start.y * inv_res;
  const double heading = pose.theta - grid.origin().theta;

  // Hits first so they take precedence over misses from other beams.
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double r = scan.ranges[i];
    if (Scan::censored(r) || r > scan.max_range) continue;
    const double a = heading + scan.angle_min + static_cast<double>(i) * scan.angle_increment;
    const int cx = static_cast<int>(std::floor(ux + r * inv_res * std::cos(a)));
    const int cy = static_cast<int>(std::floor(uy + r * inv_res * std::sin(a)));
    if (!grid.contains(cx, cy)) continue;
    const std::size_t idx = grid.index(cx, cy);
    if (stamp_[idx] != hit_mark) {
      stamp_[idx] = hit_mark;
      hits_.push_back(idx);
    }
  }

  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double r = scan.ranges[i];
    const bool censored = Scan::censored(r) || r > scan.max_range;
    const double a = heading + scan.angle_min + static_cast<double>(i) * scan.angle_increment;
    const double dx = std::cos(a);
    const double dy = std::sin(a);
    int end_x = 0;
    int end_y = 0;
    double limit = scan.max_range * inv_res;
    if (!censored) {
      end_x = static_cast<int>(std::floor(ux + r * inv_res * dx));
      end_y = static_cast<int>(std::floor(uy + r * inv_res * dy));
      limit = r * inv_res;
    }
    traverse_cells(ux, uy, dx, dy, limit, [&](int cx, int cy, double t) {
      if (!censored && cx == end_x && cy == end_y) return false;
      // Censored beams clear only cells the ray actually enters before max_range.
      if (censored && t >= limit) return false;
      if (!grid.contains(cx, cy)) return false;
      const std::size_t idx = grid.index(cx, cy);
      if (stamp_[idx] == hit_mark) return true;
      if (stamp_[idx] != miss_mark) {
        stamp_[idx] = miss_mark;
        misses_.push_back(idx);
      }
      return true;
    });
  }

  auto cells = grid.mutable_cells();
  const double bound = grid.clamp_bound();
  for (std::size_t idx : misses_) cells[idx] = std::clamp(cells[idx] + params_.miss, -bound, bound);
  for (std::size_t idx : hits_) cells[idx] = std::clamp(cells[idx] + params_.hit, -bound, bound);
}

}  // namespace lunasim::mapping
