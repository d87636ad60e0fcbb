#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace lunasim::mapping {

// Planar range scan. Beam i points at angle_min + i * angle_increment
// relative to the sensor heading. Readings equal to kNoReturn are censored:
// nothing was hit within max_range.
struct Scan {
  static constexpr double kNoReturn = std::numeric_limits<double>::infinity();

  double angle_min = 0.0;
  double angle_increment = 0.0;
  double max_range = 0.0;
  std::vector<double> ranges;

  std::size_t beams() const { return ranges.size(); }
  static bool censored(double r) { return !(r < kNoReturn); }
};

}  // namespace lunasim::mapping
