#include "dqgat/sim/map.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace dqgat::sim {

Vec2 rigid(Vec2 p, Vec2 shift, double angle) { return rotate(p, angle) + shift; }

Polygon ribbon(const Polyline& center, double width) {
  const auto left = center.offset(width / 2).points();
  const auto right = center.offset(-width / 2).points();
  Polygon poly(left.begin(), left.end());
  poly.insert(poly.end(), right.rbegin(), right.rend());
  return poly;
}

int LaneMap::add_lane(std::string name, Polyline center, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("lane width must be positive");
  Lane lane;
  lane.id = static_cast<int>(lanes_.size());
  lane.name = std::move(name);
  lane.center = std::move(center);
  lane.width = width;
  lanes_.push_back(std::move(lane));
  return lanes_.back().id;
}

void LaneMap::connect(int from, int to) {
  auto& succ = lanes_.at(static_cast<std::size_t>(from)).successors;
  (void)lanes_.at(static_cast<std::size_t>(to));
  if (std::find(succ.begin(), succ.end(), to) == succ.end()) succ.push_back(to);
}

int LaneMap::add_route(std::string name, std::vector<int> lanes) {
  if (lanes.empty()) throw std::invalid_argument("route " + name + " has no lanes");
  std::vector<const Polyline*> parts;
  Route r;
  double s = 0.0;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto& lane = this->lane(lanes[i]);
    if (i > 0) {
      const auto& prev = this->lane(lanes[i - 1]);
      if (std::find(prev.successors.begin(), prev.successors.end(), lanes[i]) == prev.successors.end()) {
        throw std::invalid_argument("route " + name + ": lane " + lane.name + " does not follow " + prev.name);
      }
    }
    r.lane_start.push_back(s);
    s += lane.center.length();
    parts.push_back(&lane.center);
  }
  r.id = static_cast<int>(routes_.size());
  r.name = std::move(name);
  r.lanes = std::move(lanes);
  r.path = Polyline::concat(parts);
  // Joins drop duplicate points, so recompute lane starts on the joined path.
  for (std::size_t i = 0; i < r.lanes.size(); ++i) {
    r.lane_start[i] = r.path.project(lane(r.lanes[i]).center.points().front(), r.lane_start[i] - 1.0,
                                     r.lane_start[i] + 1.0)
                          .s;
  }
  routes_.push_back(std::move(r));
  return routes_.back().id;
}

void LaneMap::add_lane_ribbon(int lane_id) {
  const auto& l = lane(lane_id);
  add_drivable(ribbon(l.center, l.width));
}

int LaneMap::route_id(const std::string& name) const {
  for (const auto& r : routes_) {
    if (r.name == name) return r.id;
  }
  throw std::invalid_argument("unknown route " + name);
}

bool LaneMap::is_drivable(Vec2 p) const {
  return std::any_of(drivable_.begin(), drivable_.end(), [&](const Polygon& poly) { return point_in_polygon(poly, p); });
}

std::vector<std::vector<int>> LaneMap::enumerate_paths() const {
  std::vector<int> indegree(lanes_.size(), 0);
  for (const auto& l : lanes_) {
    for (int s : l.successors) ++indegree[static_cast<std::size_t>(s)];
  }
  std::vector<std::vector<int>> paths;
  std::vector<int> current;
  std::function<void(int)> dfs = [&](int id) {
    current.push_back(id);
    const auto& l = lane(id);
    if (l.successors.empty()) {
      paths.push_back(current);
    } else {
      for (int s : l.successors) {
        if (std::find(current.begin(), current.end(), s) == current.end()) dfs(s);
      }
    }
    current.pop_back();
  };
  for (const auto& l : lanes_) {
    if (indegree[static_cast<std::size_t>(l.id)] == 0 && !l.successors.empty()) dfs(l.id);
  }
  return paths;
}

LaneMap LaneMap::transformed(Vec2 shift, double angle) const {
  auto move_line = [&](const Polyline& line) {
    std::vector<Vec2> pts;
    for (const auto& p : line.points()) pts.push_back(rigid(p, shift, angle));
    return Polyline(std::move(pts));
  };
  LaneMap out;
  out.lanes_ = lanes_;
  for (auto& l : out.lanes_) l.center = move_line(l.center);
  out.routes_ = routes_;
  for (auto& r : out.routes_) r.path = move_line(r.path);
  for (const auto& poly : drivable_) {
    Polygon moved;
    for (const auto& p : poly) moved.push_back(rigid(p, shift, angle));
    out.drivable_.push_back(std::move(moved));
  }
  for (const auto& m : markings_) out.markings_.push_back(move_line(m));
  return out;
}

}  // namespace dqgat::sim
