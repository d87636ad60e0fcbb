#pragma once

#include <cmath>
#include <numbers>

namespace lunasim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Rigid transform in the plane. Used both for robot poses and for frame
// transforms (a pose of frame B expressed in frame A maps B-points to A).
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  constexpr Vec2 position() const { return {x, y}; }

  Vec2 apply(Vec2 p) const {
    const Vec2 r = rotate(p, theta);
    return {r.x + x, r.y + y};
  }

  // this ∘ other
  Pose2 compose(const Pose2& other) const {
    const Vec2 t = apply(other.position());
    return {t.x, t.y, wrap_angle(theta + other.theta)};
  }

  Pose2 inverse() const {
    const Vec2 t = rotate({-x, -y}, -theta);
    return {t.x, t.y, wrap_angle(-theta)};
  }

  constexpr bool operator==(const Pose2&) const = default;
};

// Pose2 with its rotation precomputed, for applying one transform to many
// points.
struct Rigid2 {
  double c = 1.0;
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;

  Rigid2() = default;
  explicit Rigid2(const Pose2& p) : c(std::cos(p.theta)), s(std::sin(p.theta)), x(p.x), y(p.y) {}

  constexpr Vec2 apply(Vec2 p) const { return {c * p.x - s * p.y + x, s * p.x + c * p.y + y}; }
  constexpr Vec2 rotate(Vec2 p) const { return {c * p.x - s * p.y, s * p.x + c * p.y}; }
};

struct CellIndex {
  int x = 0;
  int y = 0;
  constexpr bool operator==(const CellIndex&) const = default;
};

}  // namespace lunasim
