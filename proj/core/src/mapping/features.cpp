#include "lunasim/mapping/features.hpp"

#include <algorithm>
#include <cmath>

namespace lunasim::mapping {

namespace {

struct Window {
  int x0, y0, w, h;
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < w && y < h; }
  std::size_t at(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }
};

// 1-4-6-4-1 separable blur, borders clamp to zero.
std::vector<double> binomial5(const std::vector<double>& in, const Window& win) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  std::vector<double> tmp(in.size(), 0.0);
  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < win.h; ++y) {
    for (int x = 0; x < win.w; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) {
        if (win.contains(x + d, y)) s += k[d + 2] * in[win.at(x + d, y)];
      }
      tmp[win.at(x, y)] = s;
    }
  }
  for (int y = 0; y < win.h; ++y) {
    for (int x = 0; x < win.w; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) {
        if (win.contains(x, y + d)) s += k[d + 2] * tmp[win.at(x, y + d)];
      }
      out[win.at(x, y)] = s;
    }
  }
  return out;
}

}  // namespace

std::vector<GridFeature> extract_features(const OccupancyGrid& grid, const FeatureParams& params) {
  int min_x = grid.width(), min_y = grid.height(), max_x = -1, max_y = -1;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!grid.is_known(x, y, params.known_epsilon)) continue;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) return {};

  const int pad = std::max(params.orientation_radius,
                           static_cast<int>(std::ceil(5.0 * params.patch_spacing))) + 3;
  Window win{min_x - pad, min_y - pad, (max_x - min_x + 1) + 2 * pad, (max_y - min_y + 1) + 2 * pad};
  std::vector<double> image(static_cast<std::size_t>(win.w) * win.h, 0.0);
  std::vector<char> known_img(image.size(), 0);
  for (int y = 0; y < win.h; ++y) {
    for (int x = 0; x < win.w; ++x) {
      const int gx = x + win.x0;
      const int gy = y + win.y0;
      if (!grid.contains(gx, gy)) continue;
      const CellClass cls = grid.classify_cell(gx, gy);
      if (cls == CellClass::kOccupied) image[win.at(x, y)] = 1.0;
      known_img[win.at(x, y)] = cls != CellClass::kUnknown;
    }
  }

  // Sobel gradients scaled so a unit step edge has magnitude 1/2.
  std::vector<double> ixx(image.size(), 0.0), iyy(image.size(), 0.0), ixy(image.size(), 0.0);
  auto px = [&](int x, int y) { return win.contains(x, y) ? image[win.at(x, y)] : 0.0; };
  for (int y = 0; y < win.h; ++y) {
    for (int x = 0; x < win.w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1) -
                         px(x - 1, y - 1) - 2 * px(x - 1, y) - px(x - 1, y + 1)) / 8.0;
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1) -
                         px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1)) / 8.0;
      const std::size_t i = win.at(x, y);
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }
  const auto sxx = binomial5(ixx, win);
  const auto syy = binomial5(iyy, win);
  const auto sxy = binomial5(ixy, win);
  std::vector<double> response(image.size(), 0.0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double det = sxx[i] * syy[i] - sxy[i] * sxy[i];
    const double tr = sxx[i] + syy[i];
    response[i] = det - params.harris_k * tr * tr;
  }

  std::vector<GridFeature> out;
  const int r = params.nms_radius;
  for (int y = 0; y < win.h; ++y) {
    for (int x = 0; x < win.w; ++x) {
      const double v = response[win.at(x, y)];
      if (v < params.min_response) continue;
      const int gx = x + win.x0;
      const int gy = y + win.y0;
      if (!grid.contains(gx, gy)) continue;
      bool peak = true;
      for (int dy = -r; dy <= r && peak; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if ((dx == 0 && dy == 0) || !win.contains(x + dx, y + dy)) continue;
          const double o = response[win.at(x + dx, y + dy)];
          // Plateaus resolve to the first cell in row-major order.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (o > v || (o == v && earlier)) {
            peak = false;
            break;
          }
        }
      }
      if (!peak) continue;
      bool known = false;
      for (int dy = -1; dy <= 1 && !known; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (grid.contains(gx + dx, gy + dy) && grid.is_known(gx + dx, gy + dy, params.known_epsilon)) {
            known = true;
            break;
          }
        }
      }
      if (!known) continue;

      // Sub-cell peak refinement along each axis.
      auto refine = [](double m, double c, double p) {
        const double denom = m - 2.0 * c + p;
        if (std::abs(denom) < 1e-12) return 0.0;
        return std::clamp(0.5 * (m - p) / denom, -0.5, 0.5);
      };
      const double ox = (win.contains(x - 1, y) && win.contains(x + 1, y))
                            ? refine(response[win.at(x - 1, y)], v, response[win.at(x + 1, y)])
                            : 0.0;
      const double oy = (win.contains(x, y - 1) && win.contains(x, y + 1))
                            ? refine(response[win.at(x, y - 1)], v, response[win.at(x, y + 1)])
                            : 0.0;

      double m10 = 0.0, m01 = 0.0;
      const int ro = params.orientation_radius;
      for (int dy = -ro; dy <= ro; ++dy) {
        for (int dx = -ro; dx <= ro; ++dx) {
          if (dx * dx + dy * dy > ro * ro) continue;
          const double w = px(x + dx, y + dy);
          m10 += w * dx;
          m01 += w * dy;
        }
      }
      const double local_theta = (std::abs(m10) + std::abs(m01) > 1e-9) ? std::atan2(m01, m10) : 0.0;

      std::uint64_t desc = 0;
      std::uint64_t mask = 0;
      const double c = std::cos(local_theta);
      const double s = std::sin(local_theta);
      for (int row = 0; row < 8; ++row) {
        for (int col = 0; col < 8; ++col) {
          const double u = (col - 3.5) * params.patch_spacing;
          const double w = (row - 3.5) * params.patch_spacing;
          const double sx = x + 0.5 + ox + c * u - s * w;
          const double sy = y + 0.5 + oy + s * u + c * w;
          const int ix = static_cast<int>(std::floor(sx));
          const int iy = static_cast<int>(std::floor(sy));
          if (!win.contains(ix, iy) || !known_img[win.at(ix, iy)]) continue;
          mask |= (1ULL << (row * 8 + col));
          if (image[win.at(ix, iy)] > 0.5) desc |= (1ULL << (row * 8 + col));
        }
      }

      GridFeature f;
      f.cell = {gx, gy};
      f.position = grid.origin().apply({(gx + 0.5 + ox) * grid.resolution(),
                                        (gy + 0.5 + oy) * grid.resolution()});
      f.orientation = wrap_angle(local_theta + grid.origin().theta);
      f.descriptor = desc;
      f.known_mask = mask;
      f.response = v;
      out.push_back(f);
    }
  }

  std::sort(out.begin(), out.end(), [](const GridFeature& a, const GridFeature& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.cell.y != b.cell.y) return a.cell.y < b.cell.y;
    return a.cell.x < b.cell.x;
  });
  if (out.size() > params.max_features) out.resize(params.max_features);
  return out;
}

}  // namespace lunasim::mapping
