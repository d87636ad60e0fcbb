#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "lunasim/geometry.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"

namespace lunasim::mapping {

struct GridFeature {
  Vec2 position;            // map frame, metres
  double orientation = 0;   // map frame, radians
  std::uint64_t descriptor = 0;  // 8x8 occupancy patch, row-major, bit r*8+c
  std::uint64_t known_mask = 0;  // same layout; set where the sample is known
  double response = 0;
  CellIndex cell;
};

struct FeatureParams {
  double harris_k = 0.04;
  double min_response = 0.001;
  int nms_radius = 3;
  int orientation_radius = 7;
  double patch_spacing = 3.0;  // cells between descriptor samples
  std::size_t max_features = 400;
  double known_epsilon = 0.1;
};

// Harris corners of the thresholded occupancy image, oriented by the
// occupancy centroid around them and described by an oriented 8x8 binary
// patch. Output is sorted by response, ties broken by cell index.
std::vector<GridFeature> extract_features(const OccupancyGrid& grid,
                                          const FeatureParams& params = {});

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

// Hamming distance over samples known in both patches, scaled to 64 bits.
// Patches sharing fewer than `min_shared` known samples compare as 64.
inline int descriptor_distance(const GridFeature& a, const GridFeature& b, int min_shared = 24) {
  const std::uint64_t shared = a.known_mask & b.known_mask;
  const int n = std::popcount(shared);
  if (n < min_shared) return 64;
  return (std::popcount((a.descriptor ^ b.descriptor) & shared) * 64 + n / 2) / n;
}

}  // namespace lunasim::mapping
