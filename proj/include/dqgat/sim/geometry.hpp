#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace dqgat::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps to (-pi, pi].
double wrap_angle(double a);
inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Piecewise-linear curve parameterised by arclength.
class Polyline {
 public:
  Polyline() = default;
  /// Drops consecutive duplicates; throws if fewer than two distinct points remain.
  explicit Polyline(std::vector<Vec2> points);

  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<double>& arclength() const { return s_; }
  double length() const { return s_.empty() ? 0.0 : s_.back(); }
  bool empty() const { return points_.empty(); }

  /// Position at arclength s; linear extrapolation beyond either end.
  Vec2 point_at(double s) const;
  double heading_at(double s) const;

  struct Projection {
    double s = 0.0;
    double lateral = 0.0;  // positive to the left of travel direction
    double distance = 0.0;
  };
  /// Closest point among segments overlapping [s_lo, s_hi].
  Projection project(Vec2 p, double s_lo, double s_hi) const;
  Projection project(Vec2 p) const { return project(p, -1e300, 1e300); }

  /// Sub-curve between two arclengths.
  Polyline slice(double s0, double s1) const;
  Polyline offset(double lateral) const;
  static Polyline concat(const std::vector<const Polyline*>& parts);

 private:
  std::vector<Vec2> points_;
  std::vector<double> s_;
  std::size_t segment_at(double s) const;
};

/// Oriented rectangle: center, heading, length along heading, width across.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
  bool contains(Vec2 p) const;
  /// Signed distance from p to the boundary (negative inside).
  double signed_distance(Vec2 p) const;
};

/// Separating-axis overlap test; touching boxes count as overlapping.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

using Polygon = std::vector<Vec2>;

bool point_in_polygon(const Polygon& poly, Vec2 p);
Polygon convex_hull(std::vector<Vec2> points);

/// Intersection of segments p0-p1 and q0-q1 as fractions (t, u), if any.
bool segment_intersection(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1, double& t, double& u);

/// Cubic Bezier sampled at n+1 points.
std::vector<Vec2> cubic_bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, std::size_t n);

}  // namespace dqgat::sim
