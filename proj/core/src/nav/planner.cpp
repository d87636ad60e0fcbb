#include "lunasim/nav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace lunasim::nav {

std::string_view to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::kOk: return "ok";
    case PlanStatus::kNoPath: return "no_path";
    case PlanStatus::kStartBlocked: return "start_blocked";
    case PlanStatus::kOutsideGrid: return "outside_grid";
  }
  return "?";
}

CostMap::CostMap(const mapping::OccupancyGrid& grid, const PlannerParams& params)
    : width_(grid.width()), height_(grid.height()) {
  const std::size_t n = static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  cost_.assign(n, 1.0f);
  const auto cells = grid.cells();
  const float unknown = params.allow_unknown ? static_cast<float>(params.unknown_cost) : kBlocked;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(cells[i]) <= params.known_epsilon) cost_[i] = unknown;
  }
  // Offsets whose cell centre lies closer than the inflation radius to the
  // occupied cell's square, the same test the collision model applies.
  const double r_cells = params.inflation_radius / grid.resolution();
  const int reach = static_cast<int>(std::ceil(r_cells + 0.5));
  std::vector<CellIndex> disk;
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      const double ex = std::max(std::abs(dx) - 0.5, 0.0);
      const double ey = std::max(std::abs(dy) - 0.5, 0.0);
      if (ex * ex + ey * ey < r_cells * r_cells) disk.push_back({dx, dy});
    }
  }
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (grid.at(x, y) < params.occupied_threshold) continue;
      for (const auto& d : disk) {
        const int nx = x + d.x;
        const int ny = y + d.y;
        if (contains(nx, ny)) cost_[static_cast<std::size_t>(ny) * width_ + nx] = kBlocked;
      }
    }
  }
}

namespace {

struct Open {
  double f;
  double g;
  std::uint32_t idx;
  bool operator>(const Open& o) const { return f > o.f || (f == o.f && idx > o.idx); }
};

constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

double octile(CellIndex a, CellIndex b) {
  const double dx = std::abs(a.x - b.x);
  const double dy = std::abs(a.y - b.y);
  return std::max(dx, dy) + (std::numbers::sqrt2 - 1.0) * std::min(dx, dy);
}

}  // namespace

PlanResult plan(const CostMap& costs, CellIndex start, CellIndex goal, double resolution) {
  PlanResult out;
  if (!costs.contains(start.x, start.y) || !costs.contains(goal.x, goal.y)) {
    out.status = PlanStatus::kOutsideGrid;
    return out;
  }
  if (costs.blocked(start.x, start.y)) {
    out.status = PlanStatus::kStartBlocked;
    return out;
  }
  if (costs.blocked(goal.x, goal.y)) {
    out.status = PlanStatus::kNoPath;
    return out;
  }
  const int w = costs.width();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(costs.height());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, kInf);
  std::vector<std::uint32_t> parent(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<bool> closed(n, false);
  std::priority_queue<Open, std::vector<Open>, std::greater<>> open;
  auto id = [w](int x, int y) { return static_cast<std::uint32_t>(y * w + x); };
  const auto s = id(start.x, start.y);
  const auto t = id(goal.x, goal.y);
  g[s] = 0.0;
  open.push({octile(start, goal), 0.0, s});
  while (!open.empty()) {
    const Open cur = open.top();
    open.pop();
    if (closed[cur.idx]) continue;
    closed[cur.idx] = true;
    ++out.expansions;
    if (cur.idx == t) break;
    const int cx = static_cast<int>(cur.idx % w);
    const int cy = static_cast<int>(cur.idx / w);
    for (int k = 0; k < 8; ++k) {
      const int nx = cx + kDx[k];
      const int ny = cy + kDy[k];
      if (costs.blocked(nx, ny)) continue;
      const bool diag = k >= 4;
      if (diag && (costs.blocked(cx + kDx[k], cy) || costs.blocked(cx, cy + kDy[k]))) continue;
      const double step = diag ? std::numbers::sqrt2 : 1.0;
      const auto ni = id(nx, ny);
      const double ng = cur.g + step * costs.cost(nx, ny);
      if (ng < g[ni]) {
        g[ni] = ng;
        parent[ni] = cur.idx;
        open.push({ng + octile({nx, ny}, goal), ng, ni});
      }
    }
  }
  if (!closed[t]) {
    out.status = PlanStatus::kNoPath;
    return out;
  }
  std::vector<CellIndex> cells;
  for (auto i = t;; i = parent[i]) {
    cells.push_back({static_cast<int>(i % w), static_cast<int>(i / w)});
    if (i == s) break;
  }
  std::reverse(cells.begin(), cells.end());
  double len = 0.0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const bool diag = cells[i].x != cells[i - 1].x && cells[i].y != cells[i - 1].y;
    len += diag ? std::numbers::sqrt2 : 1.0;
  }
  out.status = PlanStatus::kOk;
  out.path.cells = std::move(cells);
  out.path.length_m = len * resolution;
  out.path.cost = g[t] * resolution;
  return out;
}

PlanResult plan(const mapping::OccupancyGrid& grid, Vec2 start, Vec2 goal, const PlannerParams& params) {
  const auto s = grid.cell_of(start);
  const auto t = grid.cell_of(goal);
  if (!s || !t) {
    PlanResult r;
    r.status = PlanStatus::kOutsideGrid;
    return r;
  }
  return plan(CostMap(grid, params), *s, *t, grid.resolution());
}

std::vector<Vec2> path_points(const mapping::OccupancyGrid& grid, const PlannedPath& path) {
  std::vector<Vec2> pts;
  pts.reserve(path.cells.size());
  for (const auto& c : path.cells) pts.push_back(grid.cell_center(c.x, c.y));
  return pts;
}

}  // namespace lunasim::nav
