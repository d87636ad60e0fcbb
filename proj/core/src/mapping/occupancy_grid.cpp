#include "lunasim/mapping/occupancy_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lunasim::mapping {

namespace {
constexpr int kGrowChunk = 64;
}

OccupancyGrid::OccupancyGrid(Pose2 origin, double resolution, int width, int height,
                             double clamp)
    : origin_(origin), resolution_(resolution), width_(width), height_(height),
      clamp_(clamp) {
  if (resolution <= 0.0) throw std::invalid_argument("grid resolution must be positive");
  if (width < 0 || height < 0) throw std::invalid_argument("grid dims must be non-negative");
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
}

void OccupancyGrid::set(int cx, int cy, double v) {
  cells_[index(cx, cy)] = std::clamp(v, -clamp_, clamp_);
}

void OccupancyGrid::add(int cx, int cy, double delta) {
  double& c = cells_[index(cx, cy)];
  c = std::clamp(c + delta, -clamp_, clamp_);
}

Vec2 OccupancyGrid::to_cell_coords(Vec2 p) const {
  const Vec2 local = origin_.inverse().apply(p);
  return {local.x / resolution_, local.y / resolution_};
}

CellIndex OccupancyGrid::cell_of_unbounded(Vec2 p) const {
  const Vec2 u = to_cell_coords(p);
  return {static_cast<int>(std::floor(u.x)), static_cast<int>(std::floor(u.y))};
}

std::optional<CellIndex> OccupancyGrid::cell_of(Vec2 p) const {
  const CellIndex c = cell_of_unbounded(p);
  if (!contains(c.x, c.y)) return std::nullopt;
  return c;
}

Vec2 OccupancyGrid::cell_center(int cx, int cy) const {
  return origin_.apply({(cx + 0.5) * resolution_, (cy + 0.5) * resolution_});
}

bool OccupancyGrid::is_known(int cx, int cy, double epsilon) const {
  return std::abs(at(cx, cy)) > epsilon;
}

std::size_t OccupancyGrid::known_count(double epsilon) const {
  return static_cast<std::size_t>(std::count_if(
      cells_.begin(), cells_.end(), [epsilon](double v) { return std::abs(v) > epsilon; }));
}

bool OccupancyGrid::ensure_contains(Vec2 p, double margin) {
  const Vec2 u = to_cell_coords(p);
  const double m = margin / resolution_;
  const int need_x0 = static_cast<int>(std::floor(u.x - m));
  const int need_y0 = static_cast<int>(std::floor(u.y - m));
  const int need_x1 = static_cast<int>(std::ceil(u.x + m));
  const int need_y1 = static_cast<int>(std::ceil(u.y + m));
  if (need_x0 >= 0 && need_y0 >= 0 && need_x1 <= width_ && need_y1 <= height_) return false;

  auto round_down = [](int v) { return v >= 0 ? 0 : -((-v + kGrowChunk - 1) / kGrowChunk) * kGrowChunk; };
  const int shift_x = -round_down(std::min(need_x0, 0));
  const int shift_y = -round_down(std::min(need_y0, 0));
  auto round_up = [](int v) { return ((v + kGrowChunk - 1) / kGrowChunk) * kGrowChunk; };
  const int new_w = std::max(width_ + shift_x, round_up(std::max(need_x1 + shift_x, width_ + shift_x)));
  const int new_h = std::max(height_ + shift_y, round_up(std::max(need_y1 + shift_y, height_ + shift_y)));

  std::vector<double> grown(static_cast<std::size_t>(new_w) * static_cast<std::size_t>(new_h), 0.0);
  for (int y = 0; y < height_; ++y) {
    std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(index(0, y)), width_,
                grown.begin() + static_cast<std::ptrdiff_t>((y + shift_y) * new_w + shift_x));
  }
  origin_ = origin_.compose(Pose2{-shift_x * resolution_, -shift_y * resolution_, 0.0});
  width_ = new_w;
  height_ = new_h;
  cells_ = std::move(grown);
  return true;
}

OccupancyGrid OccupancyGrid::reframed(const Pose2& frame_pose) const {
  OccupancyGrid out = *this;
  out.origin_ = frame_pose.compose(origin_);
  return out;
}

bool OccupancyGrid::same_geometry(const OccupancyGrid& o) const {
  return width_ == o.width_ && height_ == o.height_ && resolution_ == o.resolution_ &&
         origin_ == o.origin_;
}

}  // namespace lunasim::mapping
