#include "dqgat/sim/scenario.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>

namespace dqgat::sim {

namespace {

constexpr double kArmLength = 60.0;
constexpr double kEgoApproach = 40.0;  // ego starts this far before the junction
constexpr double kGoalBeyondExit = 20.0;

struct ArmLanes {
  double angle = 0.0;  // radians, direction pointing away from the junction
  std::vector<int> inbound;   // index 0 is nearest the road centre
  std::vector<int> outbound;
};

std::size_t bezier_samples(Vec2 a, Vec2 b) {
  return std::max<std::size_t>(8, static_cast<std::size_t>(norm(b - a) / 0.5));
}

Polyline connector(Vec2 p0, double h0, Vec2 p3, double h3) {
  const double k = 0.45 * norm(p3 - p0);
  return Polyline(cubic_bezier(p0, p0 + unit(h0) * k, p3 - unit(h3) * k, p3, bezier_samples(p0, p3)));
}

/// Straight arms radiating from the origin plus their drivable rectangles and
/// markings. Returns the lanes of each arm.
std::vector<ArmLanes> build_arms(LaneMap& map, const std::vector<double>& angles_deg, int lanes_per_dir,
                                 double inner_radius) {
  const double w = kLaneWidth;
  const double half = w * lanes_per_dir;
  std::vector<ArmLanes> arms;
  for (std::size_t a = 0; a < angles_deg.size(); ++a) {
    ArmLanes arm;
    arm.angle = deg2rad(angles_deg[a]);
    const Vec2 d = unit(arm.angle);
    const Vec2 n_in{-d.y, d.x};  // right-hand side of inbound travel
    const Vec2 near = d * inner_radius;
    const Vec2 far = d * (inner_radius + kArmLength);
    for (int i = 0; i < lanes_per_dir; ++i) {
      const double off = (i + 0.5) * w;
      const auto tag = "arm" + std::to_string(a);
      arm.inbound.push_back(
          map.add_lane(tag + "_in" + std::to_string(i), Polyline({far + n_in * off, near + n_in * off})));
      arm.outbound.push_back(
          map.add_lane(tag + "_out" + std::to_string(i), Polyline({near - n_in * off, far - n_in * off})));
    }
    map.add_drivable({near + n_in * half, far + n_in * half, far - n_in * half, near - n_in * half});
    map.add_marking(Polyline({near, far}));
    for (int i = 1; i < lanes_per_dir; ++i) {
      map.add_marking(Polyline({near + n_in * (i * w), far + n_in * (i * w)}));
      map.add_marking(Polyline({near - n_in * (i * w), far - n_in * (i * w)}));
    }
    arms.push_back(std::move(arm));
  }
  return arms;
}

double junction_radius(const std::vector<double>& angles_deg, int lanes_per_dir) {
  auto sorted = angles_deg;
  std::sort(sorted.begin(), sorted.end());
  double min_gap = 360.0 - sorted.back() + sorted.front();
  for (std::size_t i = 1; i < sorted.size(); ++i) min_gap = std::min(min_gap, sorted[i] - sorted[i - 1]);
  const double half = kLaneWidth * lanes_per_dir;
  return half / std::tan(deg2rad(min_gap) / 2) + 1.5;
}

/// Unsignalised junction: arms plus Bezier connectors for every movement
/// except U-turns. With two lanes, the inner lane serves left turns and the
/// outer lane right turns; both serve straight movements.
void build_junction(LaneMap& map, const std::vector<double>& angles_deg, int lanes_per_dir) {
  const double radius = junction_radius(angles_deg, lanes_per_dir);
  const auto arms = build_arms(map, angles_deg, lanes_per_dir, radius);
  std::vector<Vec2> corners;
  for (const auto& arm : arms) {
    const Vec2 d = unit(arm.angle);
    const Vec2 n{-d.y, d.x};
    const double half = kLaneWidth * lanes_per_dir;
    corners.push_back(d * radius + n * half);
    corners.push_back(d * radius - n * half);
  }
  map.add_drivable(convex_hull(corners));

  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::size_t b = 0; b < arms.size(); ++b) {
      if (a == b) continue;
      const double turn = wrap_angle(arms[b].angle - (arms[a].angle + std::numbers::pi));
      const bool straight = std::abs(turn) < deg2rad(30.0);
      for (int i = 0; i < lanes_per_dir; ++i) {
        int j = i;
        if (lanes_per_dir > 1 && !straight) {
          const bool left = turn > 0;
          if (left != (i == 0)) continue;
        }
        const Lane in = map.lane(arms[a].inbound[static_cast<std::size_t>(i)]);
        const Lane out = map.lane(arms[b].outbound[static_cast<std::size_t>(j)]);
        const Vec2 p0 = in.center.points().back();
        const Vec2 p3 = out.center.points().front();
        const int c = map.add_lane("conn_" + in.name + "_" + out.name,
                                   connector(p0, arms[a].angle + std::numbers::pi, p3, arms[b].angle));
        map.connect(in.id, c);
        map.connect(c, out.id);
        map.add_lane_ribbon(c);
      }
    }
  }
}

std::vector<Vec2> arc(double radius, double a0, double a1) {
  const std::size_t n = std::max<std::size_t>(4, static_cast<std::size_t>(radius * std::abs(a1 - a0) / 0.5));
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(n);
    pts.push_back(unit(t) * radius);
  }
  return pts;
}

/// Single-lane counter-clockwise ring with four arms.
void build_roundabout(LaneMap& map) {
  const double ring = 18.0;
  const double arm_start = 28.0;
  const double delta = deg2rad(25.0);
  const std::vector<double> angles{0.0, 90.0, 180.0, 270.0};
  const auto arms = build_arms(map, angles, 1, arm_start);
  const std::size_t n = arms.size();
  std::vector<int> entry(n), exit(n), ring_after_entry(n), ring_through_arm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = arms[i].angle;
    const Vec2 e = unit(th + delta) * ring;
    const Vec2 x = unit(th - delta) * ring;
    const Lane in = map.lane(arms[i].inbound[0]);
    const Lane out = map.lane(arms[i].outbound[0]);
    entry[i] = map.add_lane("entry" + std::to_string(i),
                            connector(in.center.points().back(), th + std::numbers::pi, e, th + delta + std::numbers::pi / 2));
    exit[i] = map.add_lane("exit" + std::to_string(i),
                           connector(x, th - delta + std::numbers::pi / 2, out.center.points().front(), th));
    map.connect(in.id, entry[i]);
    map.connect(exit[i], out.id);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double th = arms[i].angle;
    const double next = th + std::numbers::pi / 2;
    ring_after_entry[i] = map.add_lane("ring_e" + std::to_string(i), Polyline(arc(ring, th + delta, next - delta)));
    ring_through_arm[i] = map.add_lane("ring_x" + std::to_string(i), Polyline(arc(ring, th - delta, th + delta)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    map.connect(entry[i], ring_after_entry[i]);
    map.connect(ring_after_entry[i], exit[j]);
    map.connect(ring_after_entry[i], ring_through_arm[j]);
    map.connect(ring_through_arm[i], ring_after_entry[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int id : {entry[i], exit[i], ring_after_entry[i], ring_through_arm[i]}) map.add_lane_ribbon(id);
  }
}

std::string arm_of(const std::string& lane_name) { return lane_name.substr(0, lane_name.find('_')); }

void add_routes(LaneMap& map) {
  for (const auto& path : map.enumerate_paths()) {
    const auto& first = map.lane(path.front()).name;
    const auto& last = map.lane(path.back()).name;
    if (arm_of(first) == arm_of(last)) continue;
    map.add_route(first + "->" + last, path);
  }
}

void finish_junction(Scenario& sc, const std::string& ego_from, const std::string& ego_to) {
  add_routes(sc.map);
  sc.ego_route = sc.map.route_id(ego_from + "->" + ego_to);
  const auto& r = sc.map.route(sc.ego_route);
  sc.ego_start_s = sc.map.lane(r.lanes.front()).center.length() - kEgoApproach;
  sc.goal_s = r.lane_start.back() + kGoalBeyondExit;
  for (const auto& route : sc.map.routes()) sc.background_routes.push_back(route.id);
}

}  // namespace

ScenarioId parse_scenario(std::string_view name) {
  if (name == "t_left") return ScenarioId::kTLeft;
  if (name == "t_merge") return ScenarioId::kTMerge;
  if (name == "int_cross") return ScenarioId::kIntCross;
  if (name == "int_left") return ScenarioId::kIntLeft;
  if (name == "five_way") return ScenarioId::kFiveWay;
  if (name == "roundabout") return ScenarioId::kRoundabout;
  if (name == "stopped_lead") return ScenarioId::kStoppedLead;
  throw std::invalid_argument("unknown scenario: " + std::string(name));
}

std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::kTLeft: return "t_left";
    case ScenarioId::kTMerge: return "t_merge";
    case ScenarioId::kIntCross: return "int_cross";
    case ScenarioId::kIntLeft: return "int_left";
    case ScenarioId::kFiveWay: return "five_way";
    case ScenarioId::kRoundabout: return "roundabout";
    case ScenarioId::kStoppedLead: return "stopped_lead";
  }
  return "unknown";
}

const std::vector<ScenarioId>& junction_scenarios() {
  static const std::vector<ScenarioId> ids{ScenarioId::kTLeft,   ScenarioId::kTMerge,  ScenarioId::kIntCross,
                                           ScenarioId::kIntLeft, ScenarioId::kFiveWay, ScenarioId::kRoundabout};
  return ids;
}

void compute_conflicts(Scenario& sc) {
  const auto& routes = sc.map.routes();
  const std::size_t n = routes.size();
  sc.conflicts.assign(n, std::vector<std::optional<ConflictPoint>>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      const auto& ra = routes[a];
      const auto& rb = routes[b];
      if (ra.lanes.front() == rb.lanes.front()) continue;  // common origin: car-following only
      std::optional<ConflictPoint> merge;
      for (std::size_t k = 0; k < ra.lanes.size() && !merge; ++k) {
        for (std::size_t m = 0; m < rb.lanes.size(); ++m) {
          if (ra.lanes[k] == rb.lanes[m]) {
            merge = ConflictPoint{ra.lane_start[k], rb.lane_start[m], true};
            break;
          }
        }
      }
      const double limit = merge ? merge->s_self : ra.path.length();
      const double limit_b = merge ? merge->s_other : rb.path.length();
      std::optional<ConflictPoint> cross;
      const auto& pa = ra.path.points();
      const auto& sa = ra.path.arclength();
      const auto& pb = rb.path.points();
      const auto& sb = rb.path.arclength();
      for (std::size_t i = 0; i + 1 < pa.size() && sa[i] < limit - 1e-6 && !cross; ++i) {
        for (std::size_t j = 0; j + 1 < pb.size() && sb[j] < limit_b - 1e-6; ++j) {
          double t = 0, u = 0;
          if (segment_intersection(pa[i], pa[i + 1], pb[j], pb[j + 1], t, u)) {
            const double s_self = sa[i] + t * (sa[i + 1] - sa[i]);
            const double s_other = sb[j] + u * (sb[j + 1] - sb[j]);
            if (s_self < limit - 1e-6 && s_other < limit_b - 1e-6) {
              cross = ConflictPoint{s_self, s_other, false};
              break;
            }
          }
        }
      }
      sc.conflicts[a][b] = cross ? cross : merge;
    }
  }

  sc.ego_zones.clear();
  if (sc.ego_route < 0) return;
  std::vector<Scenario::Zone> zones;
  for (int b : sc.background_routes) {
    if (b == sc.ego_route) continue;
    const auto& c = sc.conflict(sc.ego_route, b);
    if (!c) continue;
    zones.push_back({c->s_self - 5.0, c->s_self + (c->merge ? 8.0 : 5.0), {b}});
  }
  std::sort(zones.begin(), zones.end(), [](const auto& x, const auto& y) { return x.s_begin < y.s_begin; });
  for (const auto& z : zones) {
    if (!sc.ego_zones.empty() && z.s_begin <= sc.ego_zones.back().s_end) {
      auto& last = sc.ego_zones.back();
      last.s_end = std::max(last.s_end, z.s_end);
      last.routes.insert(last.routes.end(), z.routes.begin(), z.routes.end());
    } else {
      sc.ego_zones.push_back(z);
    }
  }
}

Scenario build_scenario(ScenarioId id) {
  Scenario sc;
  sc.id = id;
  switch (id) {
    case ScenarioId::kTMerge:
      build_junction(sc.map, {0.0, 180.0, 270.0}, 1);
      finish_junction(sc, "arm2_in0", "arm0_out0");
      break;
    case ScenarioId::kTLeft:
      build_junction(sc.map, {0.0, 180.0, 270.0}, 1);
      finish_junction(sc, "arm2_in0", "arm1_out0");
      break;
    case ScenarioId::kIntCross:
      build_junction(sc.map, {0.0, 90.0, 180.0, 270.0}, 2);
      finish_junction(sc, "arm3_in1", "arm1_out1");
      break;
    case ScenarioId::kIntLeft:
      build_junction(sc.map, {0.0, 90.0, 180.0, 270.0}, 2);
      finish_junction(sc, "arm3_in0", "arm2_out0");
      break;
    case ScenarioId::kFiveWay:
      build_junction(sc.map, {270.0, 342.0, 54.0, 126.0, 198.0}, 1);
      finish_junction(sc, "arm0_in0", "arm4_out0");
      break;
    case ScenarioId::kRoundabout:
      build_roundabout(sc.map);
      finish_junction(sc, "arm3_in0", "arm1_out0");
      sc.traffic_scale = 0.75;
      break;
    case ScenarioId::kStoppedLead: {
      const int lane = sc.map.add_lane("road", Polyline({{-10.0, 0.0}, {290.0, 0.0}}));
      sc.map.add_lane_ribbon(lane);
      sc.ego_route = sc.map.add_route("road", {lane});
      sc.ego_start_s = 10.0;
      sc.goal_s = 90.0;
      sc.background_routes = {sc.ego_route};
      break;
    }
  }
  compute_conflicts(sc);
  return sc;
}

Scenario Scenario::transformed(Vec2 shift, double angle) const {
  Scenario out = *this;
  out.map = map.transformed(shift, angle);
  return out;
}

std::shared_ptr<const Scenario> get_scenario(ScenarioId id) {
  static std::mutex mutex;
  static std::map<ScenarioId, std::shared_ptr<const Scenario>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[id];
  if (!slot) slot = std::make_shared<const Scenario>(build_scenario(id));
  return slot;
}

}  // namespace dqgat::sim
