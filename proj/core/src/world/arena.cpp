#include "lunasim/world/arena.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lunasim/grid_ray.hpp"

namespace lunasim::world {

std::string_view to_string(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::kBoulder: return "boulder";
    case ObstacleKind::kCrater: return "crater";
    case ObstacleKind::kWall: return "wall";
  }
  return "?";
}

std::optional<ObstacleKind> obstacle_kind_from_string(std::string_view s) {
  if (s == "boulder") return ObstacleKind::kBoulder;
  if (s == "crater") return ObstacleKind::kCrater;
  if (s == "wall") return ObstacleKind::kWall;
  return std::nullopt;
}

GroundTruthGrid::GroundTruthGrid(int cols, int rows, double resolution,
                                 std::vector<std::uint8_t> occupied)
    : cols_(cols), rows_(rows), resolution_(resolution), occupied_(std::move(occupied)) {
  free_count_ = static_cast<std::size_t>(std::count(occupied_.begin(), occupied_.end(), 0));
}

std::optional<CellIndex> GroundTruthGrid::cell_of(Vec2 p) const {
  const int cx = static_cast<int>(std::floor(p.x / resolution_));
  const int cy = static_cast<int>(std::floor(p.y / resolution_));
  if (!contains(cx, cy)) return std::nullopt;
  return CellIndex{cx, cy};
}

bool GroundTruthGrid::occupied_at(Vec2 p) const {
  const auto c = cell_of(p);
  return !c || occupied(c->x, c->y);
}

bool GroundTruthGrid::footprint_free(Vec2 center, double radius) const {
  const int r = static_cast<int>(std::ceil(radius / resolution_)) + 1;
  const auto c = cell_of(center);
  if (!c) return false;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int x = c->x + dx;
      const int y = c->y + dy;
      if (!contains(x, y)) return false;
      if (!occupied(x, y)) continue;
      // Distance from the footprint centre to the cell square.
      const double qx = std::clamp(center.x, x * resolution_, (x + 1) * resolution_);
      const double qy = std::clamp(center.y, y * resolution_, (y + 1) * resolution_);
      if (std::hypot(center.x - qx, center.y - qy) < radius) return false;
    }
  }
  return true;
}

namespace {

void check_inside(const Obstacle& o, double min_x, double min_y, double max_x, double max_y,
                  const ArenaSpec& spec) {
  if (min_x < 0.0 || min_y < 0.0 || max_x > spec.width_m || max_y > spec.height_m) {
    throw WorldError(std::string(to_string(o.kind)) + " at (" + std::to_string(o.center.x) +
                     ", " + std::to_string(o.center.y) + ") extends outside the arena");
  }
}

}  // namespace

GroundTruthGrid load_world(const ArenaSpec& spec) {
  if (!(spec.width_m > 0.0) || !(spec.height_m > 0.0) || !(spec.resolution_m > 0.0)) {
    throw WorldError("arena width, height and resolution must be positive");
  }
  const int cols = static_cast<int>(std::ceil(spec.width_m / spec.resolution_m - 1e-9));
  const int rows = static_cast<int>(std::ceil(spec.height_m / spec.resolution_m - 1e-9));
  const double res = spec.resolution_m;
  std::vector<std::uint8_t> occ(static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows), 0);
  auto mark = [&](int x, int y) { occ[static_cast<std::size_t>(y) * cols + x] = 1; };

  for (int x = 0; x < cols; ++x) {
    mark(x, 0);
    mark(x, rows - 1);
  }
  for (int y = 0; y < rows; ++y) {
    mark(0, y);
    mark(cols - 1, y);
  }

  for (const Obstacle& o : spec.obstacles) {
    double ext_x = o.radius;
    double ext_y = o.radius;
    if (o.kind == ObstacleKind::kWall) {
      ext_x = o.half_extent.x;
      ext_y = o.half_extent.y;
      if (ext_x <= 0.0 || ext_y <= 0.0) throw WorldError("wall extents must be positive");
    } else if (o.radius <= 0.0) {
      throw WorldError(std::string(to_string(o.kind)) + " radius must be positive");
    }
    check_inside(o, o.center.x - ext_x, o.center.y - ext_y, o.center.x + ext_x,
                 o.center.y + ext_y, spec);
    const int x0 = std::max(0, static_cast<int>(std::floor((o.center.x - ext_x) / res)));
    const int x1 = std::min(cols - 1, static_cast<int>(std::floor((o.center.x + ext_x) / res)));
    const int y0 = std::max(0, static_cast<int>(std::floor((o.center.y - ext_y) / res)));
    const int y1 = std::min(rows - 1, static_cast<int>(std::floor((o.center.y + ext_y) / res)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 c{(x + 0.5) * res, (y + 0.5) * res};
        const double d = distance(c, o.center);
        bool hit = false;
        switch (o.kind) {
          case ObstacleKind::kBoulder:
            hit = d <= o.radius;
            break;
          case ObstacleKind::kCrater:
            hit = d <= o.radius && d >= o.radius - o.rim_width;
            break;
          case ObstacleKind::kWall:
            hit = std::abs(c.x - o.center.x) <= ext_x && std::abs(c.y - o.center.y) <= ext_y;
            break;
        }
        if (hit) mark(x, y);
      }
    }
  }
  return GroundTruthGrid(cols, rows, res, std::move(occ));
}

std::optional<double> raycast(const GroundTruthGrid& grid, Vec2 origin, double bearing,
                              double max_range) {
  const auto start = grid.cell_of(origin);
  if (!start) throw WorldError("raycast origin outside the arena");
  if (grid.occupied(start->x, start->y)) throw WorldError("raycast origin inside an occupied cell");
  if (max_range <= 0.0) return std::nullopt;
  const double res = grid.resolution();
  std::optional<double> hit;
  traverse_cells(origin.x / res, origin.y / res, std::cos(bearing), std::sin(bearing),
                 max_range / res, [&](int cx, int cy, double t) {
                   if (!grid.contains(cx, cy) || grid.occupied(cx, cy)) {
                     hit = t * res;
                     return false;
                   }
                   return true;
                 });
  if (hit && *hit > max_range) return std::nullopt;
  return hit;
}

CoverageCount coverage_count(const mapping::OccupancyGrid& merged, const GroundTruthGrid& truth,
                             double known_epsilon) {
  if (std::abs(merged.resolution() - truth.resolution()) > 1e-12) {
    throw WorldError("coverage: merged grid resolution differs from ground truth");
  }
  CoverageCount out;
  out.free = truth.free_count();
  if (merged.empty()) return out;
  // Walk truth cells row by row; the merged-frame coordinate advances by a
  // constant step per cell so we avoid a full transform per cell.
  const Pose2 inv = merged.origin().inverse();
  const double res = truth.resolution();
  const double inv_res = 1.0 / merged.resolution();
  const Vec2 step_x = rotate({res, 0.0}, inv.theta);
  for (int y = 0; y < truth.rows(); ++y) {
    Vec2 p = inv.apply(truth.cell_center(0, y));
    for (int x = 0; x < truth.cols(); ++x, p = p + step_x) {
      if (truth.occupied(x, y)) continue;
      const int mx = static_cast<int>(std::floor(p.x * inv_res));
      const int my = static_cast<int>(std::floor(p.y * inv_res));
      if (merged.contains(mx, my) && merged.is_known(mx, my, known_epsilon)) ++out.known_free;
    }
  }
  return out;
}

double coverage_fraction(const mapping::OccupancyGrid& merged, const GroundTruthGrid& truth,
                         double known_epsilon) {
  return coverage_count(merged, truth, known_epsilon).fraction();
}

}  // namespace lunasim::world
