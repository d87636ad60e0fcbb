#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"

namespace lunasim::world {

class WorldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ObstacleKind : std::uint8_t { kBoulder, kCrater, kWall };

std::string_view to_string(ObstacleKind k);
std::optional<ObstacleKind> obstacle_kind_from_string(std::string_view s);

struct Obstacle {
  ObstacleKind kind = ObstacleKind::kBoulder;
  Vec2 center;
  // Boulder disk radius or crater outer (rim) radius.
  double radius = 0.0;
  // Crater rim thickness; the floor inside the rim stays free.
  double rim_width = 0.3;
  // Wall half-extents along x and y (axis-aligned rectangle).
  Vec2 half_extent;
};

struct ArenaSpec {
  double width_m = 50.0;
  double height_m = 36.0;
  double resolution_m = 0.1;
  std::vector<Obstacle> obstacles;
};

// Rasterised ground truth. Cell (i, j) spans [i*res, (i+1)*res) x
// [j*res, (j+1)*res) in the arena frame; the outermost ring is occupied.
class GroundTruthGrid {
 public:
  GroundTruthGrid(int cols, int rows, double resolution, std::vector<std::uint8_t> occupied);

  int cols() const { return cols_; }
  int rows() const { return rows_; }
  double resolution() const { return resolution_; }
  double width_m() const { return cols_ * resolution_; }
  double height_m() const { return rows_ * resolution_; }

  bool contains(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < cols_ && cy < rows_; }
  bool occupied(int cx, int cy) const {
    return occupied_[static_cast<std::size_t>(cy) * static_cast<std::size_t>(cols_) +
                     static_cast<std::size_t>(cx)] != 0;
  }
  // Points outside the arena count as occupied.
  bool occupied_at(Vec2 p) const;
  std::optional<CellIndex> cell_of(Vec2 p) const;
  Vec2 cell_center(int cx, int cy) const {
    return {(cx + 0.5) * resolution_, (cy + 0.5) * resolution_};
  }
  std::size_t free_count() const { return free_count_; }
  std::size_t occupied_count() const { return occupied_.size() - free_count_; }

  // Clearance check for a circular footprint.
  bool footprint_free(Vec2 center, double radius) const;

 private:
  int cols_;
  int rows_;
  double resolution_;
  std::vector<std::uint8_t> occupied_;
  std::size_t free_count_ = 0;
};

GroundTruthGrid load_world(const ArenaSpec& spec);

// Distance along the ray to the boundary of the first occupied cell, or
// nullopt when nothing is hit within max_range.
std::optional<double> raycast(const GroundTruthGrid& grid, Vec2 origin, double bearing,
                              double max_range);

struct CoverageCount {
  std::size_t known_free = 0;
  std::size_t free = 0;
  double fraction() const {
    return free == 0 ? 0.0 : static_cast<double>(known_free) / static_cast<double>(free);
  }
};

// `merged` must already be registered in the arena frame (its origin is a
// pose in arena coordinates). A truth cell counts as covered when the merged
// cell containing its centre deviates from the prior by more than epsilon.
CoverageCount coverage_count(const mapping::OccupancyGrid& merged, const GroundTruthGrid& truth,
                             double known_epsilon = 0.1);
double coverage_fraction(const mapping::OccupancyGrid& merged, const GroundTruthGrid& truth,
                         double known_epsilon = 0.1);

}  // namespace lunasim::world
