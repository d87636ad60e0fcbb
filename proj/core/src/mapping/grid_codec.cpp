#include "lunasim/mapping/grid_codec.hpp"

#include <cmath>

namespace lunasim::mapping {

namespace {
constexpr std::uint8_t kMagic[4] = {'L', 'G', 'R', '1'};
}

Bytes encode_grid(const OccupancyGrid& grid) {
  ByteWriter runs;
  std::uint32_t run_count = 0;
  const auto cells = grid.cells();
  std::size_t i = 0;
  while (i < cells.size()) {
    const CellClass c = classify(cells[i]);
    std::size_t j = i + 1;
    while (j < cells.size() && classify(cells[j]) == c) ++j;
    runs.u8(static_cast<std::uint8_t>(c));
    runs.varint(j - i);
    ++run_count;
    i = j;
  }
  ByteWriter w;
  w.raw(kMagic);
  w.u32(static_cast<std::uint32_t>(grid.width()));
  w.u32(static_cast<std::uint32_t>(grid.height()));
  w.f64(grid.resolution());
  w.f64(grid.origin().x);
  w.f64(grid.origin().y);
  w.f64(grid.origin().theta);
  w.u32(run_count);
  const Bytes body = runs.take();
  w.raw(body);
  return w.take();
}

OccupancyGrid decode_grid(std::span<const std::uint8_t> bytes, DecodedValues values) {
  ByteReader r(bytes);
  for (std::uint8_t m : kMagic) {
    if (r.u8() != m) throw DecodeError("grid: bad magic");
  }
  const std::uint32_t width = r.u32();
  const std::uint32_t height = r.u32();
  const double res = r.f64();
  Pose2 origin;
  origin.x = r.f64();
  origin.y = r.f64();
  origin.theta = r.f64();
  if (!(res > 0.0) || !std::isfinite(origin.x) || !std::isfinite(origin.y)) {
    throw DecodeError("grid: bad header");
  }
  if (static_cast<std::uint64_t>(width) * height > (1ULL << 28)) throw DecodeError("grid: too large");
  OccupancyGrid grid(origin, res, static_cast<int>(width), static_cast<int>(height));
  auto cells = grid.mutable_cells();
  const std::uint32_t run_count = r.u32();
  std::size_t pos = 0;
  for (std::uint32_t k = 0; k < run_count; ++k) {
    const std::uint8_t cls = r.u8();
    const std::uint64_t len = r.varint();
    if (cls > 2) throw DecodeError("grid: bad cell class");
    if (len > cells.size() - pos) throw DecodeError("grid: runs overflow the grid");
    const double v = cls == 1 ? values.free : (cls == 2 ? values.occupied : 0.0);
    for (std::uint64_t n = 0; n < len; ++n) cells[pos++] = v;
  }
  if (pos != cells.size() || !r.done()) throw DecodeError("grid: run lengths do not cover the grid");
  return grid;
}

}  // namespace lunasim::mapping
