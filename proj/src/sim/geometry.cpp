#include "dqgat/sim/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace dqgat::sim {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

Polyline::Polyline(std::vector<Vec2> points) {
  for (const auto& p : points) {
    if (points_.empty() || norm(p - points_.back()) > 1e-9) points_.push_back(p);
  }
  if (points_.size() < 2) throw std::invalid_argument("polyline needs at least two distinct points");
  s_.resize(points_.size());
  s_[0] = 0.0;
  for (std::size_t i = 1; i < points_.size(); ++i) s_[i] = s_[i - 1] + norm(points_[i] - points_[i - 1]);
}

std::size_t Polyline::segment_at(double s) const {
  if (s <= s_.front()) return 0;
  if (s >= s_.back()) return points_.size() - 2;
  const auto it = std::upper_bound(s_.begin(), s_.end(), s);
  return static_cast<std::size_t>(it - s_.begin()) - 1;
}

Vec2 Polyline::point_at(double s) const {
  const auto i = segment_at(s);
  const double len = s_[i + 1] - s_[i];
  const double t = (s - s_[i]) / len;
  return points_[i] + (points_[i + 1] - points_[i]) * t;
}

double Polyline::heading_at(double s) const {
  const auto i = segment_at(s);
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y, d.x);
}

Polyline::Projection Polyline::project(Vec2 p, double s_lo, double s_hi) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  const std::size_t last = points_.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    if (s_[i + 1] < s_lo || s_[i] > s_hi) continue;
    const Vec2 a = points_[i];
    const Vec2 d = points_[i + 1] - a;
    const double len2 = dot(d, d);
    double t = dot(p - a, d) / len2;
    const double lo = i == 0 ? -std::numeric_limits<double>::infinity() : 0.0;
    const double hi = i + 1 == last ? std::numeric_limits<double>::infinity() : 1.0;
    t = std::clamp(t, lo, hi);
    const Vec2 c = a + d * t;
    const double dist = norm(p - c);
    if (dist < best.distance) {
      best.distance = dist;
      best.s = s_[i] + t * std::sqrt(len2);
      best.lateral = cross(d, p - a) / std::sqrt(len2);
    }
  }
  return best;
}

Polyline Polyline::slice(double s0, double s1) const {
  std::vector<Vec2> pts{point_at(s0)};
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (s_[i] > s0 && s_[i] < s1) pts.push_back(points_[i]);
  }
  pts.push_back(point_at(s1));
  return Polyline(std::move(pts));
}

Polyline Polyline::offset(double lateral) const {
  std::vector<Vec2> pts;
  const std::size_t n = points_.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 normal{0.0, 0.0};
    for (std::size_t j : {i == 0 ? 0 : i - 1, i + 1 == n ? i - 1 : i}) {
      const Vec2 d = points_[j + 1] - points_[j];
      const double l = norm(d);
      normal = normal + Vec2{-d.y / l, d.x / l};
    }
    const double l = norm(normal);
    pts.push_back(points_[i] + normal * (lateral / l));
  }
  return Polyline(std::move(pts));
}

Polyline Polyline::concat(const std::vector<const Polyline*>& parts) {
  std::vector<Vec2> pts;
  for (const auto* part : parts) {
    for (const auto& p : part->points()) pts.push_back(p);
  }
  return Polyline(std::move(pts));
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 f = unit(heading) * (length / 2);
  const Vec2 l = unit(heading + std::numbers::pi / 2) * (width / 2);
  return {center + f + l, center - f + l, center - f - l, center + f - l};
}

bool OrientedBox::contains(Vec2 p) const { return signed_distance(p) <= 0.0; }

double OrientedBox::signed_distance(Vec2 p) const {
  const Vec2 local = rotate(p - center, -heading);
  const double dx = std::abs(local.x) - length / 2;
  const double dy = std::abs(local.y) - width / 2;
  if (dx <= 0 && dy <= 0) return std::max(dx, dy);
  return std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
}

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{unit(a.heading), unit(a.heading + std::numbers::pi / 2), unit(b.heading),
                                 unit(b.heading + std::numbers::pi / 2)};
  for (const auto& axis : axes) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const auto& c : ca) {
      const double p = dot(c, axis);
      amin = std::min(amin, p);
      amax = std::max(amax, p);
    }
    for (const auto& c : cb) {
      const double p = dot(c, axis);
      bmin = std::min(bmin, p);
      bmax = std::max(bmax, p);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

bool point_in_polygon(const Polygon& poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool segment_intersection(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1, double& t, double& u) {
  const Vec2 r = p1 - p0;
  const Vec2 s = q1 - q0;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-12) return false;
  t = cross(q0 - p0, s) / denom;
  u = cross(q0 - p0, r) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

std::vector<Vec2> cubic_bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, std::size_t n) {
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n);
    const double m = 1.0 - t;
    pts.push_back(p0 * (m * m * m) + p1 * (3 * m * m * t) + p2 * (3 * m * t * t) + p3 * (t * t * t));
  }
  return pts;
}

}  // namespace dqgat::sim
