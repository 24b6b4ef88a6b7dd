#include "dqgat/agents/fsm_ttc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dqgat::agents {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kComfortDecel = 3.0;
constexpr double kLookahead = 40.0;

double half_extent(const sim::VehicleState& v, double direction) {
  const double rel = v.psi - direction;
  return 0.5 * v.l * std::abs(std::cos(rel)) + 0.5 * v.w * std::abs(std::sin(rel));
}

sim::Vec2 velocity(const sim::VehicleState& v) { return sim::unit(v.psi) * v.v; }

}  // namespace

double ttc(double gap, double closing_speed) {
  if (!(closing_speed > 0.0)) return kInf;
  return std::max(gap, 0.0) / closing_speed;
}

double ttc(const sim::VehicleState& ego, const sim::VehicleState& other) {
  const sim::Vec2 d = other.position() - ego.position();
  const double dist = sim::norm(d);
  if (dist < 1e-9) return 0.0;
  const double dir = std::atan2(d.y, d.x);
  const double gap = dist - half_extent(ego, dir) - half_extent(other, dir);
  const sim::Vec2 rel = velocity(other) - velocity(ego);
  const double closing = -sim::dot(rel, d * (1.0 / dist));
  return ttc(gap, closing);
}

const char* to_string(FsmState s) {
  switch (s) {
    case FsmState::kApproach: return "approach";
    case FsmState::kWait: return "wait";
    case FsmState::kCreep: return "creep";
    case FsmState::kGo: return "go";
  }
  return "?";
}

void FsmTtcConfig::validate() const {
  if (!(ttc_threshold > 0)) throw std::invalid_argument("fsm_ttc: threshold must be positive");
  if (!(creep_kmh > 0 && creep_kmh < cruise_kmh)) throw std::invalid_argument("fsm_ttc: need 0 < creep < cruise");
  if (!(min_follow_gap > 0 && creep_follow_gap > min_follow_gap)) throw std::invalid_argument("fsm_ttc: bad follow gaps");
}

std::vector<ConflictZone> conflict_zones(const sim::Scenario& scenario) {
  std::vector<ConflictZone> out;
  const auto& route = scenario.map.route(scenario.ego_route);
  for (const auto& z : scenario.ego_zones) {
    ConflictZone c;
    c.s_begin = z.s_begin;
    c.s_end = z.s_end;
    c.routes = z.routes;
    c.polygon = sim::ribbon(route.path.slice(z.s_begin, z.s_end), sim::kLaneWidth);
    out.push_back(std::move(c));
  }
  return out;
}

double zone_ttc(const sim::Scenario& scenario, const sim::VehicleState& v) {
  if (v.route < 0 || v.route == scenario.ego_route) return kInf;
  const auto& c = scenario.conflict(v.route, scenario.ego_route);
  if (!c) return kInf;
  const double d = c->s_self - v.s;
  if (c->merge ? d < 0.0 : d < -(v.l / 2 + 2.5)) return kInf;
  if (d <= v.l / 2 + 1.0) return 0.0;
  if (v.v < 0.1) return kInf;
  return (d - v.l / 2) / v.v;
}

FsmTtcPolicy::FsmTtcPolicy(FsmTtcConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void FsmTtcPolicy::reset(const sim::World& world, std::uint64_t) {
  state_ = FsmState::kApproach;
  scenario_ = &world.scenario();
  zones_ = conflict_zones(world.scenario());
}

double FsmTtcPolicy::follow_limit_kmh(const sim::World& world) const {
  const auto& ego = world.ego();
  const auto& path = world.scenario().map.route(ego.route).path;
  double limit = cfg_.cruise_kmh;
  const auto& vs = world.vehicles();
  for (std::size_t j = 1; j < vs.size(); ++j) {
    const auto pr = path.project(vs[j].position(), ego.s, ego.s + kLookahead);
    if (pr.s <= ego.s || pr.distance > 2.0) continue;
    const double rel = sim::wrap_angle(vs[j].psi - path.heading_at(pr.s));
    if (std::abs(rel) > std::numbers::pi / 3) continue;
    const double gap = pr.s - ego.s - (ego.l + vs[j].l) / 2;
    const double closing = ego.v - vs[j].v * std::cos(rel);
    if (gap < cfg_.min_follow_gap || ttc(gap, closing) < cfg_.ttc_threshold) return 0.0;
    if (gap < cfg_.creep_follow_gap) limit = std::min(limit, cfg_.creep_kmh);
  }
  return limit;
}

std::size_t FsmTtcPolicy::act(const sim::World& world) {
  if (scenario_ != &world.scenario()) reset(world, 0);
  const auto& ego = world.ego();
  const double front = ego.s + ego.l / 2;
  const double rear = ego.s - ego.l / 2;
  const ConflictZone* zone = nullptr;
  for (const auto& z : zones_) {
    if (rear < z.s_end) {
      zone = &z;
      break;
    }
  }

  double target = cfg_.cruise_kmh;
  if (zone == nullptr || front >= zone->s_begin) {
    state_ = FsmState::kGo;
  } else {
    const double to_zone = zone->s_begin - front;
    const double stop_distance = ego.v * ego.v / (2.0 * kComfortDecel) + 3.0;
    if (to_zone > stop_distance + 5.0 && state_ != FsmState::kWait) {
      state_ = FsmState::kApproach;
    } else {
      double min_ttc = kInf;
      const auto& vs = world.vehicles();
      for (std::size_t j = 1; j < vs.size(); ++j) {
        if (std::find(zone->routes.begin(), zone->routes.end(), vs[j].route) == zone->routes.end()) continue;
        min_ttc = std::min(min_ttc, zone_ttc(world.scenario(), vs[j]));
      }
      if (min_ttc < cfg_.ttc_threshold) {
        state_ = FsmState::kWait;
      } else if (min_ttc < 2.0 * cfg_.ttc_threshold) {
        state_ = to_zone > 1.0 ? FsmState::kCreep : FsmState::kWait;
      } else {
        state_ = FsmState::kGo;
      }
    }
    if (state_ == FsmState::kWait) target = 0.0;
    if (state_ == FsmState::kCreep) target = cfg_.creep_kmh;
  }
  return speed_to_action(std::min(target, follow_limit_kmh(world)));
}

}  // namespace dqgat::agents
