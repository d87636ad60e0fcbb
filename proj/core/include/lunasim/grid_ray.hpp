#pragma once

#include <cmath>
#include <limits>

namespace lunasim {

// Amanatides-Woo traversal in continuous cell coordinates (one unit per
// cell). `dir` must be a unit vector. The visitor receives each crossed cell
// together with the ray parameter at which the ray enters it and returns
// false to stop. Cells are visited while their entry parameter is <= max_t.
template <class Visit>
void traverse_cells(double ux, double uy, double dir_x, double dir_y,
                    double max_t, Visit&& visit) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int cx = static_cast<int>(std::floor(ux));
  int cy = static_cast<int>(std::floor(uy));
  const int step_x = dir_x > 0.0 ? 1 : -1;
  const int step_y = dir_y > 0.0 ? 1 : -1;
  double t_max_x = kInf;
  double t_max_y = kInf;
  double t_delta_x = kInf;
  double t_delta_y = kInf;
  if (dir_x != 0.0) {
    t_delta_x = 1.0 / std::abs(dir_x);
    t_max_x = dir_x > 0.0 ? (cx + 1.0 - ux) * t_delta_x : (ux - cx) * t_delta_x;
  }
  if (dir_y != 0.0) {
    t_delta_y = 1.0 / std::abs(dir_y);
    t_max_y = dir_y > 0.0 ? (cy + 1.0 - uy) * t_delta_y : (uy - cy) * t_delta_y;
  }
  double t = 0.0;
  while (t <= max_t) {
    if (!visit(cx, cy, t)) return;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      cx += step_x;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      cy += step_y;
      t_max_y += t_delta_y;
    }
  }
}

}  // namespace lunasim
