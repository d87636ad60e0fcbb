#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lunasim/geometry.hpp"

namespace lunasim::mapping {

enum class CellClass : std::uint8_t { kUnknown = 0, kFree = 1, kOccupied = 2 };

// Classification threshold used by the wire format and by consumers that
// need a trinary view of log-odds.
inline constexpr double kClassThreshold = 0.4;

inline CellClass classify(double log_odds) {
  if (log_odds >= kClassThreshold) return CellClass::kOccupied;
  if (log_odds <= -kClassThreshold) return CellClass::kFree;
  return CellClass::kUnknown;
}

// Log-odds occupancy grid. `origin` is the pose of the outer corner of cell
// (0, 0) in the grid's frame; the unknown prior is 0.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(Pose2 origin, double resolution, int width, int height,
                double clamp = 6.0);

  const Pose2& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double clamp_bound() const { return clamp_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  bool contains(int cx, int cy) const {
    return cx >= 0 && cy >= 0 && cx < width_ && cy < height_;
  }
  std::size_t index(int cx, int cy) const {
    return static_cast<std::size_t>(cy) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(cx);
  }

  double at(int cx, int cy) const { return cells_[index(cx, cy)]; }
  double value_or_prior(int cx, int cy) const {
    return contains(cx, cy) ? at(cx, cy) : 0.0;
  }
  void set(int cx, int cy, double v);
  // Adds delta and clamps to [-clamp, +clamp].
  void add(int cx, int cy, double delta);

  std::span<const double> cells() const { return cells_; }
  std::span<double> mutable_cells() { return cells_; }

  // Continuous cell coordinates of a frame point (cell (i, j) spans
  // [i, i+1) x [j, j+1)).
  Vec2 to_cell_coords(Vec2 p) const;
  std::optional<CellIndex> cell_of(Vec2 p) const;
  // Unbounded variant: the index may fall outside the grid.
  CellIndex cell_of_unbounded(Vec2 p) const;
  Vec2 cell_center(int cx, int cy) const;

  CellClass classify_cell(int cx, int cy) const { return classify(at(cx, cy)); }
  bool is_known(int cx, int cy, double epsilon) const;
  std::size_t known_count(double epsilon) const;

  // Grows the grid (keeping existing cells in place in the frame) so that
  // `p` lies at least `margin` metres inside it. Growth happens in chunks.
  // Returns true when the grid was reallocated.
  bool ensure_contains(Vec2 p, double margin);

  // Same cells, re-expressed in another frame: returns a copy whose origin
  // is `frame_pose ∘ origin`.
  OccupancyGrid reframed(const Pose2& frame_pose) const;

  bool same_geometry(const OccupancyGrid& o) const;

 private:
  Pose2 origin_;
  double resolution_ = 0.1;
  int width_ = 0;
  int height_ = 0;
  double clamp_ = 6.0;
  std::vector<double> cells_;
};

}  // namespace lunasim::mapping
