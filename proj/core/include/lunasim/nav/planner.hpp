#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"

namespace lunasim::nav {

struct PlannerParams {
  double inflation_radius = 0.25;
  double unknown_cost = 2.0;
  // Cells at or above this log-odds are obstacles; cells within epsilon of
  // the prior are unknown.
  double occupied_threshold = mapping::kClassThreshold;
  double known_epsilon = 0.1;
  bool allow_unknown = true;
  std::size_t max_expansions = 2'000'000;
};

// Per-cell traversal class after inflation.
class CostMap {
 public:
  static constexpr float kBlocked = -1.0f;

  CostMap() = default;
  CostMap(const mapping::OccupancyGrid& grid, const PlannerParams& params);

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  // Multiplier for entering the cell, or kBlocked.
  float cost(int x, int y) const { return cost_[static_cast<std::size_t>(y) * width_ + x]; }
  bool blocked(int x, int y) const { return !contains(x, y) || cost(x, y) < 0.0f; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> cost_;
};

enum class PlanStatus : std::uint8_t { kOk, kNoPath, kStartBlocked, kOutsideGrid };

std::string_view to_string(PlanStatus s);

struct PlannedPath {
  std::vector<CellIndex> cells;  // start to goal, consecutive cells 8-adjacent
  double length_m = 0.0;
  double cost = 0.0;  // length weighted by entry multipliers
  double planned_at = 0.0;
};

struct PlanResult {
  PlanStatus status = PlanStatus::kNoPath;
  PlannedPath path;
  std::size_t expansions = 0;

  bool ok() const { return status == PlanStatus::kOk; }
};

// A* over 8-connected cells. Moving into a cell costs step length times its
// multiplier (1 free, unknown_cost unknown); diagonal moves need both
// orthogonal neighbours open. The octile heuristic is admissible since every
// multiplier is at least 1.
PlanResult plan(const CostMap& costs, CellIndex start, CellIndex goal, double resolution);
// Convenience overload on frame coordinates of `grid`.
PlanResult plan(const mapping::OccupancyGrid& grid, Vec2 start, Vec2 goal,
                const PlannerParams& params = {});

// Cell centres of a path in the grid's frame.
std::vector<Vec2> path_points(const mapping::OccupancyGrid& grid, const PlannedPath& path);

}  // namespace lunasim::nav
