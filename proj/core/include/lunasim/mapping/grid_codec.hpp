#pragma once

#include <cstdint>
#include <span>

#include "lunasim/bytes.hpp"
#include "lunasim/mapping/occupancy_grid.hpp"

namespace lunasim::mapping {

// Run-length-encoded trinary grid (see docs/protocol.md):
//   "LGR1" | u32 width | u32 height | f64 resolution |
//   f64 origin_x | f64 origin_y | f64 origin_theta | u32 run_count |
//   run_count x (u8 class, varint length)
// Cells are scanned row-major from cell (0, 0); classes are 0 unknown,
// 1 free, 2 occupied, thresholded at +-0.4 log-odds. All integers and
// floats are little-endian.
Bytes encode_grid(const OccupancyGrid& grid);

struct DecodedValues {
  double free = -2.0;
  double occupied = 2.0;
};

// Throws DecodeError on malformed input.
OccupancyGrid decode_grid(std::span<const std::uint8_t> bytes, DecodedValues values = {});

}  // namespace lunasim::mapping
