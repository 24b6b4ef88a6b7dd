#include "dqgat/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace dqgat::sim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLeaderHorizon = 60.0;
constexpr double kYieldHorizon = 4.0;   // s, time-to-conflict that triggers yielding
constexpr double kArrivalMargin = 1.5;  // s
constexpr double kStopBeforeConflict = 3.0;
constexpr double kThroughTurn = 0.5;  // rad; through routes keep priority at merges
constexpr double kEntryOffset = 1.0;  // keeps spawned centers inside the arm polygon

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Density parse_density(std::string_view name) {
  if (name == "regular") return Density::kRegular;
  if (name == "dense") return Density::kDense;
  throw std::invalid_argument("unknown density: " + std::string(name));
}

std::string to_string(Density d) { return d == Density::kRegular ? "regular" : "dense"; }

ScenarioConfig ScenarioConfig::make(ScenarioId scenario, Density density, std::uint64_t seed) {
  ScenarioConfig c;
  c.scenario = scenario;
  c.density = density;
  c.seed = seed;
  if (scenario == ScenarioId::kStoppedLead) {
    c.vehicle_count_min = c.vehicle_count_max = density == Density::kDense ? 2 : 1;
    c.speed_min = 6.0;
    c.speed_max = 9.0;
    return c;
  }
  const double scale = get_scenario(scenario)->traffic_scale;
  const int lo = density == Density::kDense ? 9 : 4;
  const int hi = density == Density::kDense ? 16 : 8;
  c.vehicle_count_min = static_cast<int>(std::lround(lo * scale));
  c.vehicle_count_max = static_cast<int>(std::lround(hi * scale));
  if (density == Density::kDense) {
    c.speed_min = 3.0;
    c.speed_max = 8.0;
  }
  return c;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scenario config: " + what); };
  if (vehicle_count_min < 0 || vehicle_count_max < vehicle_count_min) fail("bad vehicle count range");
  if (!(width_min > 0 && width_max >= width_min)) fail("bad width range");
  if (!(length_min > 0 && length_max >= length_min)) fail("bad length range");
  if (!(truck_width_min > 0 && truck_width_max >= truck_width_min)) fail("bad truck width range");
  if (!(truck_length_min > 0 && truck_length_max >= truck_length_min)) fail("bad truck length range");
  if (!(truck_probability >= 0 && truck_probability <= 1)) fail("truck_probability must lie in [0,1]");
  if (!(speed_min > 0 && speed_max >= speed_min)) fail("bad speed range");
  if (!(conflict_bias >= 0 && conflict_bias <= 1)) fail("conflict_bias must lie in [0,1]");
  if (max_steps <= 0) fail("max_steps must be positive");
  if (jam_timeout_steps <= 0) fail("jam_timeout_steps must be positive");
  if (!(lead_gap_min >= 0 && lead_gap_max >= lead_gap_min)) fail("bad lead gap range");
  if (!(lead_delay_min >= 0 && lead_delay_max >= lead_delay_min)) fail("bad lead delay range");
}

std::string ScenarioConfig::to_text() const {
  std::ostringstream os;
  os << "scenario = " << to_string(scenario) << '\n';
  os << "density = " << to_string(density) << '\n';
  os << "seed = " << seed << '\n';
  os << "vehicle_count_min = " << vehicle_count_min << '\n';
  os << "vehicle_count_max = " << vehicle_count_max << '\n';
  const std::pair<const char*, double> reals[] = {
      {"width_min", width_min},
      {"width_max", width_max},
      {"length_min", length_min},
      {"length_max", length_max},
      {"truck_probability", truck_probability},
      {"truck_width_min", truck_width_min},
      {"truck_width_max", truck_width_max},
      {"truck_length_min", truck_length_min},
      {"truck_length_max", truck_length_max},
      {"speed_min", speed_min},
      {"speed_max", speed_max},
      {"conflict_bias", conflict_bias},
      {"lead_gap_min", lead_gap_min},
      {"lead_gap_max", lead_gap_max},
      {"lead_delay_min", lead_delay_min},
      {"lead_delay_max", lead_delay_max},
  };
  for (const auto& [k, v] : reals) os << k << " = " << fmt_double(v) << '\n';
  os << "max_steps = " << max_steps << '\n';
  os << "jam_timeout_steps = " << jam_timeout_steps << '\n';
  return os.str();
}

ScenarioConfig ScenarioConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("scenario config line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  const auto scenario = take("scenario");
  if (!scenario) throw std::invalid_argument("scenario config: missing 'scenario'");
  const auto density = take("density");
  const auto seed = take("seed");
  auto c = make(parse_scenario(*scenario), density ? parse_density(*density) : Density::kRegular,
                seed ? std::stoull(*seed) : 0);
  auto set_int = [&](const char* key, int& field) {
    if (auto v = take(key)) field = std::stoi(*v);
  };
  auto set_real = [&](const char* key, double& field) {
    if (auto v = take(key)) field = std::stod(*v);
  };
  set_int("vehicle_count_min", c.vehicle_count_min);
  set_int("vehicle_count_max", c.vehicle_count_max);
  set_real("width_min", c.width_min);
  set_real("width_max", c.width_max);
  set_real("length_min", c.length_min);
  set_real("length_max", c.length_max);
  set_real("truck_probability", c.truck_probability);
  set_real("truck_width_min", c.truck_width_min);
  set_real("truck_width_max", c.truck_width_max);
  set_real("truck_length_min", c.truck_length_min);
  set_real("truck_length_max", c.truck_length_max);
  set_real("speed_min", c.speed_min);
  set_real("speed_max", c.speed_max);
  set_real("conflict_bias", c.conflict_bias);
  set_real("lead_gap_min", c.lead_gap_min);
  set_real("lead_gap_max", c.lead_gap_max);
  set_real("lead_delay_min", c.lead_delay_min);
  set_real("lead_delay_max", c.lead_delay_max);
  set_int("max_steps", c.max_steps);
  set_int("jam_timeout_steps", c.jam_timeout_steps);
  if (!kv.empty()) throw std::invalid_argument("scenario config: unknown key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open scenario config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

void ScenarioConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write scenario config " + path.string());
  os << to_text();
}

std::vector<std::string> Events::names() const {
  std::vector<std::string> out;
  if (collision) out.emplace_back("collision");
  if (success) out.emplace_back("success");
  if (jam_timeout) out.emplace_back("jam_timeout");
  if (step_timeout) out.emplace_back("step_timeout");
  return out;
}

Events Events::from_names(const std::vector<std::string>& names) {
  Events e;
  for (const auto& n : names) {
    if (n == "collision") {
      e.collision = true;
    } else if (n == "success") {
      e.success = true;
    } else if (n == "jam_timeout") {
      e.jam_timeout = true;
    } else if (n == "step_timeout") {
      e.step_timeout = true;
    } else {
      throw std::invalid_argument("unknown event " + n);
    }
  }
  return e;
}

double idm_acceleration(double v, double v_desired, double gap, double closing, const IdmParams& p) {
  double a = p.a_max * (1.0 - std::pow(v / std::max(v_desired, 0.1), p.delta));
  if (std::isfinite(gap)) {
    const double s_star = p.s0 + std::max(0.0, v * p.time_headway + v * closing / (2.0 * std::sqrt(p.a_max * p.b)));
    const double g = std::max(gap, 0.1);
    a -= p.a_max * (s_star / g) * (s_star / g);
  }
  return std::clamp(a, p.min_accel, p.a_max);
}

double pid_acceleration(PidState& st, double target, double v, const PidGains& g) {
  const double e = target - v;
  const double de = st.has_prev ? (e - st.prev_error) / kDt : 0.0;
  st.prev_error = e;
  st.has_prev = true;
  const double trial_integral = std::clamp(st.integral + e * kDt, -g.integral_limit, g.integral_limit);
  const double raw = g.kp * e + g.ki * trial_integral + g.kd * de;
  // Conditional integration: freeze the integral while saturated or far from the set point.
  if (raw > g.a_min && raw < g.a_max && std::abs(e) < g.integral_zone) st.integral = trial_integral;
  const double a = g.kp * e + g.ki * st.integral + g.kd * de;
  return std::clamp(a, g.a_min, g.a_max);
}

bool check_collision(const VehicleState& a, const VehicleState& b) { return boxes_overlap(a.box(), b.box()); }

double reward(const Events& events, double ego_speed_kmh) {
  if (events.collision) return kCollisionReward;
  return std::clamp(ego_speed_kmh / 40.0, 0.0, 1.0);
}

VehicleState World::sample_vehicle_extent(VehicleState v) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool truck = u(rng_) < config_.truck_probability;
  auto lerp = [&](double lo, double hi) { return lo + (hi - lo) * u(rng_); };
  v.w = truck ? lerp(config_.truck_width_min, config_.truck_width_max) : lerp(config_.width_min, config_.width_max);
  v.l = truck ? lerp(config_.truck_length_min, config_.truck_length_max)
              : lerp(config_.length_min, config_.length_max);
  return v;
}

std::pair<int, double> World::sample_spawn_route(bool allow_upstream) {
  const auto& sc = *scenario_;
  std::vector<int> conflicting;
  for (const auto& z : sc.ego_zones) {
    for (int r : z.routes) {
      if (std::find(conflicting.begin(), conflicting.end(), r) == conflicting.end()) conflicting.push_back(r);
    }
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool upstream = u(rng_) < config_.conflict_bias && allow_upstream && !conflicting.empty();
  const auto& pool = upstream ? conflicting : sc.background_routes;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const int route = pool[pick(rng_)];
  const double len = sc.map.route(route).path.length();
  double s_hi = 0.75 * len;
  if (upstream) {
    const auto& c = sc.conflict(route, sc.ego_route);
    if (c) s_hi = std::max(kEntryOffset, c->s_self - 8.0);
  }
  return {route, s_hi};
}

bool World::spawn_clear(const VehicleState& v, double margin) const {
  const auto& ego_route = scenario_->map.route(scenario_->ego_route);
  const auto& route = scenario_->map.route(v.route);
  const auto& e = ego();
  if (route.lanes.front() == ego_route.lanes.front() && v.s < e.s + 12.0) return false;
  if (norm(v.position() - e.position()) < 12.0) return false;
  OrientedBox grown = v.box();
  grown.length += 2 * margin;
  grown.width += 0.5;
  for (const auto& o : vehicles_) {
    OrientedBox other = o.box();
    other.length += 2 * margin;
    if (boxes_overlap(grown, other)) return false;
  }
  return true;
}

World spawn_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  World w;
  w.scenario_ = get_scenario(cfg.scenario);
  w.config_ = cfg;
  w.rng_.seed(cfg.seed);
  const auto& sc = *w.scenario_;
  const auto& ego_path = sc.map.route(sc.ego_route).path;

  VehicleState ego;
  ego.id = 0;
  ego.route = sc.ego_route;
  ego.s = sc.ego_start_s;
  const Vec2 p = ego_path.point_at(ego.s);
  ego.x = p.x;
  ego.y = p.y;
  ego.psi = ego_path.heading_at(ego.s);
  w.vehicles_.push_back(ego);
  w.drivers_.push_back({});
  w.ego_trace_.push_back(p);

  std::uniform_int_distribution<int> count_dist(cfg.vehicle_count_min, cfg.vehicle_count_max);
  const int count = count_dist(w.rng_);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto lerp = [&](double lo, double hi) { return lo + (hi - lo) * u(w.rng_); };

  if (sc.id == ScenarioId::kStoppedLead) {
    double rear_s = ego.s + ego.l / 2;
    double delay = 0.0;
    for (int k = 0; k < count; ++k) {
      VehicleState v = w.sample_vehicle_extent({});
      v.id = w.next_id_++;
      v.route = sc.ego_route;
      const double gap = lerp(cfg.lead_gap_min, cfg.lead_gap_max);
      v.s = rear_s + gap + v.l / 2;
      rear_s = v.s + v.l / 2;
      const Vec2 q = ego_path.point_at(v.s);
      v.x = q.x;
      v.y = q.y;
      v.psi = ego_path.heading_at(v.s);
      delay += lerp(cfg.lead_delay_min, cfg.lead_delay_max);
      DriverParams d;
      d.desired_speed = lerp(cfg.speed_min, cfg.speed_max);
      d.aggressiveness = u(w.rng_);
      d.depart_time = delay;
      w.vehicles_.push_back(v);
      w.drivers_.push_back(d);
    }
    return w;
  }

  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      VehicleState v = w.sample_vehicle_extent({});
      const auto [route, s_hi] = w.sample_spawn_route(attempt < 500);
      v.route = route;
      const auto& path = sc.map.route(v.route).path;
      v.s = lerp(kEntryOffset, s_hi);
      const Vec2 q = path.point_at(v.s);
      v.x = q.x;
      v.y = q.y;
      v.psi = path.heading_at(v.s);
      DriverParams d;
      d.desired_speed = lerp(cfg.speed_min, cfg.speed_max);
      d.aggressiveness = u(w.rng_);
      v.v = d.desired_speed * lerp(0.6, 1.0);
      if (!w.spawn_clear(v, 2.0)) continue;
      v.id = w.next_id_++;
      w.vehicles_.push_back(v);
      w.drivers_.push_back(d);
      placed = true;
    }
    if (!placed) {
      throw SimulationError("seed exhaustion: could not place vehicle " + std::to_string(k) + " of " +
                            std::to_string(count) + " after 1000 attempts");
    }
  }
  return w;
}

double background_policy(const World& world, std::size_t index) {
  const auto& sc = world.scenario();
  const auto& self = world.vehicles().at(index);
  const auto& drv = world.driver(index);
  const IdmParams idm;
  if (world.time() < drv.depart_time) return -idm.b;

  const auto& path = sc.map.route(self.route).path;
  double accel = idm_acceleration(self.v, drv.desired_speed, kInf, 0.0, idm);

  const auto& all = world.vehicles();
  for (std::size_t j = 0; j < all.size(); ++j) {
    if (j == index) continue;
    const auto& other = all[j];
    // Car following: anything roughly aligned and inside our lane ahead.
    const auto proj = path.project(other.position(), self.s, self.s + kLeaderHorizon);
    if (proj.s > self.s && proj.distance < 2.0) {
      const double rel = wrap_angle(other.psi - path.heading_at(proj.s));
      if (std::abs(rel) < std::numbers::pi / 3) {
        const double gap = proj.s - self.s - (self.l + other.l) / 2;
        const double v_lead = other.v * std::cos(rel);
        accel = std::min(accel, idm_acceleration(self.v, drv.desired_speed, gap, self.v - v_lead, idm));
      }
    }

    const auto& c = sc.conflict(self.route, other.route);
    if (!c) continue;
    const double d_self = c->s_self - self.s;
    const double d_other = c->s_other - other.s;
    if (d_self < 0.0) continue;
    if (c->merge ? d_other < 0.0 : d_other < -(other.l / 2 + 2.5)) continue;
    if (drv.aggressiveness >= 0.5) continue;
    if (c->merge && std::abs(wrap_angle(path.heading_at(path.length()) - path.heading_at(0.0))) < kThroughTurn) continue;
    const double committed = std::max(3.0, self.v * self.v / (2.0 * idm.b) + 1.0);
    if (d_self < committed) continue;
    const double t_self = d_self / std::max(self.v, 0.5);
    const double t_other = std::max(d_other, 0.0) / std::max(other.v, 0.5);
    if (!(t_other < kYieldHorizon && t_other < t_self + kArrivalMargin)) continue;
    const bool other_conservative_background = j > 0 && world.driver(j).aggressiveness < 0.5;
    if (other_conservative_background && std::abs(t_self - t_other) < kArrivalMargin && self.id < other.id) continue;
    const double stop_gap = d_self - self.l / 2 - kStopBeforeConflict;
    accel = std::min(accel, idm_acceleration(self.v, drv.desired_speed, stop_gap, self.v, idm));
  }
  return accel;
}

void World::advance_ego(double target) {
  auto& e = vehicles_.front();
  double a = 0.0;
  if (target <= 0.0 && e.v <= 1e-9) {
    pid_ = {};
  } else {
    a = pid_acceleration(pid_, target, e.v);
  }
  const double v_new = std::max(0.0, e.v + a * kDt);
  const auto& path = scenario_->map.route(e.route).path;
  const double lookahead = 4.0 + 0.5 * e.v;
  const Vec2 tp = path.point_at(e.s + lookahead);
  const Vec2 to = tp - e.position();
  const double alpha = wrap_angle(std::atan2(to.y, to.x) - e.psi);
  const double steer = std::clamp(std::atan(2.0 * kWheelbase * std::sin(alpha) / lookahead), -0.6, 0.6);
  e.a = (v_new - e.v) / kDt;
  e.v = v_new;
  e.psi = wrap_angle(e.psi + v_new / kWheelbase * std::tan(steer) * kDt);
  e.x += v_new * std::cos(e.psi) * kDt;
  e.y += v_new * std::sin(e.psi) * kDt;
  e.s = path.project(e.position(), e.s - 1.0, e.s + v_new * kDt + 2.0).s;
}

void World::advance_background(const std::vector<double>& accel) {
  const bool respawn = scenario_->id != ScenarioId::kStoppedLead;
  for (std::size_t i = vehicles_.size(); i-- > 1;) {
    auto& v = vehicles_[i];
    const double v_new = std::max(0.0, v.v + accel[i] * kDt);
    v.a = (v_new - v.v) / kDt;
    v.v = v_new;
    v.s += v_new * kDt;
    const auto& path = scenario_->map.route(v.route).path;
    if (v.s >= path.length()) {
      vehicles_.erase(vehicles_.begin() + static_cast<std::ptrdiff_t>(i));
      drivers_.erase(drivers_.begin() + static_cast<std::ptrdiff_t>(i));
      if (respawn) ++pending_respawns_;
      continue;
    }
    const Vec2 p = path.point_at(v.s);
    v.x = p.x;
    v.y = p.y;
    v.psi = path.heading_at(v.s);
  }
}

void World::try_respawn() {
  const auto& routes = scenario_->background_routes;
  if (routes.empty()) return;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int still_pending = 0;
  for (int k = 0; k < pending_respawns_; ++k) {
    VehicleState v = sample_vehicle_extent({});
    v.route = sample_spawn_route(true).first;
    const auto& path = scenario_->map.route(v.route).path;
    v.s = kEntryOffset;
    const Vec2 q = path.point_at(v.s);
    v.x = q.x;
    v.y = q.y;
    v.psi = path.heading_at(v.s);
    DriverParams d;
    d.desired_speed = config_.speed_min + (config_.speed_max - config_.speed_min) * u(rng_);
    d.aggressiveness = u(rng_);
    d.depart_time = 0.0;
    v.v = 0.8 * d.desired_speed;
    if (!spawn_clear(v, 4.0)) {
      ++still_pending;
      continue;
    }
    v.id = next_id_++;
    vehicles_.push_back(v);
    drivers_.push_back(d);
  }
  pending_respawns_ = still_pending;
}

bool World::corridor_free() const {
  const auto& e = ego();
  OrientedBox corridor;
  corridor.heading = e.psi;
  corridor.length = 10.0;
  corridor.width = kLaneWidth;
  corridor.center = e.position() + unit(e.psi) * (e.l / 2 + 5.0);
  for (std::size_t i = 1; i < vehicles_.size(); ++i) {
    if (boxes_overlap(corridor, vehicles_[i].box())) return false;
  }
  return true;
}

StepOutcome World::step(std::size_t action) {
  if (terminal_) throw SimulationError("step called on a terminal world");
  if (action >= kNumActions) throw std::invalid_argument("action index out of range: " + std::to_string(action));

  std::vector<double> accel(vehicles_.size(), 0.0);
  for (std::size_t i = 1; i < vehicles_.size(); ++i) accel[i] = background_policy(*this, i);
  advance_ego(kmh_to_ms(kActionSpeedsKmh[action]));
  advance_background(accel);
  try_respawn();
  ++steps_;
  ego_trace_.push_back(ego().position());

  Events ev;
  for (std::size_t i = 1; i < vehicles_.size() && !ev.collision; ++i) ev.collision = check_collision(ego(), vehicles_[i]);
  if (!ev.collision) ev.success = ego().s >= scenario_->goal_s;
  const int window = config_.jam_timeout_steps;
  if (!ev.collision && !ev.success && steps_ >= window) {
    const Vec2 moved = ego_trace_[static_cast<std::size_t>(steps_)] - ego_trace_[static_cast<std::size_t>(steps_ - window)];
    ev.jam_timeout = norm(moved) < 1.0 && corridor_free();
  }
  if (!ev.collision && !ev.success && !ev.jam_timeout) ev.step_timeout = steps_ >= config_.max_steps;

  StepOutcome out;
  out.step = steps_;
  out.vehicles = vehicles_;
  out.events = ev;
  out.reward = reward(ev, ms_to_kmh(ego().v));
  terminal_ = ev.terminal();
  last_events_ = ev;
  return out;
}

World World::transformed(Vec2 shift, double angle) const {
  World w = *this;
  w.scenario_ = std::make_shared<const Scenario>(scenario_->transformed(shift, angle));
  for (auto& v : w.vehicles_) {
    const Vec2 p = rigid(v.position(), shift, angle);
    v.x = p.x;
    v.y = p.y;
    v.psi = wrap_angle(v.psi + angle);
  }
  for (auto& p : w.ego_trace_) p = rigid(p, shift, angle);
  return w;
}

void World::place_vehicle(VehicleState state, DriverParams driver) {
  state.id = next_id_++;
  vehicles_.push_back(state);
  drivers_.push_back(driver);
}

void World::clear_background() {
  vehicles_.resize(1);
  drivers_.resize(1);
  pending_respawns_ = 0;
}

}  // namespace dqgat::sim
