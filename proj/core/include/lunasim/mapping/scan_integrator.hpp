#pragma once

#include <cstdint>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"
#include "lunasim/mapping/scan.hpp"

namespace lunasim::mapping {

struct LogOddsParams {
  double hit = 0.85;
  double miss = -0.4;
};

// Inverse sensor model. Within one scan every cell is updated at most once;
// a cell that holds a beam endpoint takes the hit update even if another
// beam passes through it.
class ScanIntegrator {
 public:
  explicit ScanIntegrator(LogOddsParams params = {}) : params_(params) {}

  // `pose` is the sensor pose in the grid's frame. The grid grows to hold
  // the scan footprint.
  void integrate(OccupancyGrid& grid, const Pose2& pose, const Scan& scan);

  const LogOddsParams& params() const { return params_; }

 private:
  LogOddsParams params_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::vector<std::size_t> hits_;
  std::vector<std::size_t> misses_;
};

inline void integrate_scan(OccupancyGrid& grid, const Pose2& pose, const Scan& scan,
                           LogOddsParams params = {}) {
  ScanIntegrator(params).integrate(grid, pose, scan);
}

}  // namespace lunasim::mapping
