#pragma once

#include <string>
#include <vector>

#include "dqgat/sim/geometry.hpp"

namespace dqgat::sim {

inline constexpr double kLaneWidth = 3.5;

struct Lane {
  int id = -1;
  std::string name;
  Polyline center;
  double width = kLaneWidth;
  std::vector<int> successors;
};

struct Route {
  int id = -1;
  std::string name;
  std::vector<int> lanes;
  Polyline path;
  std::vector<double> lane_start;  // arclength on `path` where each lane begins
};

/// Lanes with a successor graph, routes through it, drivable area and
/// lane markings, all in world metres.
class LaneMap {
 public:
  int add_lane(std::string name, Polyline center, double width = kLaneWidth);
  void connect(int from, int to);
  /// Validates that consecutive lanes are connected and joins their centerlines.
  int add_route(std::string name, std::vector<int> lanes);
  void add_drivable(Polygon poly) { drivable_.push_back(std::move(poly)); }
  void add_marking(Polyline line) { markings_.push_back(std::move(line)); }
  /// Adds a ribbon polygon of the lane's width along its centerline.
  void add_lane_ribbon(int lane);

  const Lane& lane(int id) const { return lanes_.at(static_cast<std::size_t>(id)); }
  const std::vector<Lane>& lanes() const { return lanes_; }
  const Route& route(int id) const { return routes_.at(static_cast<std::size_t>(id)); }
  const std::vector<Route>& routes() const { return routes_; }
  int route_id(const std::string& name) const;
  const std::vector<Polygon>& drivable() const { return drivable_; }
  const std::vector<Polyline>& markings() const { return markings_; }

  bool is_drivable(Vec2 p) const;
  /// All simple paths from lanes without predecessors to lanes without successors.
  std::vector<std::vector<int>> enumerate_paths() const;

  /// Rigid motion: rotate by `angle` about the origin, then translate.
  LaneMap transformed(Vec2 shift, double angle) const;

 private:
  std::vector<Lane> lanes_;
  std::vector<Route> routes_;
  std::vector<Polygon> drivable_;
  std::vector<Polyline> markings_;
};

Polygon ribbon(const Polyline& center, double width);
Vec2 rigid(Vec2 p, Vec2 shift, double angle);

}  // namespace dqgat::sim
