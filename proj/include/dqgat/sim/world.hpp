#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqgat/sim/scenario.hpp"

namespace dqgat::sim {

inline constexpr double kDt = 0.1;
inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<double, kNumActions> kActionSpeedsKmh{0.0, 10.0, 20.0, 30.0, 40.0};
inline constexpr double kEgoWidth = 1.9;
inline constexpr double kEgoLength = 4.6;
inline constexpr double kWheelbase = 2.7;
inline constexpr double kCollisionReward = -50.0;

inline double kmh_to_ms(double kmh) { return kmh / 3.6; }
inline double ms_to_kmh(double ms) { return ms * 3.6; }

enum class Density { kRegular, kDense };
Density parse_density(std::string_view name);
std::string to_string(Density d);

struct VehicleState {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
  double a = 0.0;
  double w = kEgoWidth;
  double l = kEgoLength;
  int route = -1;
  double s = 0.0;

  Vec2 position() const { return {x, y}; }
  OrientedBox box() const { return {{x, y}, psi, l, w}; }
};

struct ScenarioConfig {
  ScenarioId scenario = ScenarioId::kTMerge;
  Density density = Density::kRegular;
  std::uint64_t seed = 0;
  int vehicle_count_min = 4;
  int vehicle_count_max = 8;
  double width_min = 1.7;
  double width_max = 2.1;
  double length_min = 4.0;
  double length_max = 5.2;
  double truck_probability = 0.15;
  double truck_width_min = 2.2;
  double truck_width_max = 2.5;
  double truck_length_min = 6.0;
  double truck_length_max = 8.0;
  double speed_min = 4.0;
  double speed_max = 9.0;
  // probability that a spawned vehicle is placed upstream on a route crossing or merging with the ego route
  double conflict_bias = 0.85;
  int max_steps = 600;
  int jam_timeout_steps = 150;
  // stopped_lead toy task
  double lead_gap_min = 10.0;
  double lead_gap_max = 30.0;
  double lead_delay_min = 2.0;
  double lead_delay_max = 6.0;

  /// Defaults for a scenario and density (counts scaled per scenario).
  static ScenarioConfig make(ScenarioId scenario, Density density, std::uint64_t seed);
  void validate() const;

  /// "key = value" lines; '#' starts a comment.
  std::string to_text() const;
  static ScenarioConfig from_text(const std::string& text);
  static ScenarioConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct Events {
  bool collision = false;
  bool success = false;
  bool jam_timeout = false;
  bool step_timeout = false;

  bool terminal() const { return collision || success || jam_timeout || step_timeout; }
  int count() const { return int(collision) + int(success) + int(jam_timeout) + int(step_timeout); }
  std::vector<std::string> names() const;
  static Events from_names(const std::vector<std::string>& names);
  bool operator==(const Events&) const = default;
};

struct StepOutcome {
  int step = 0;  // steps taken after this one
  std::vector<VehicleState> vehicles;  // ego first
  Events events;
  double reward = 0.0;
};

struct DriverParams {
  double desired_speed = 8.0;
  double aggressiveness = 0.5;
  double depart_time = 0.0;  // held at rest before this time
};

struct IdmParams {
  double a_max = 2.0;
  double b = 3.0;
  double s0 = 2.0;
  double time_headway = 1.5;
  double delta = 4.0;
  double min_accel = -9.0;
};

/// Intelligent driver model; `gap` is bumper-to-bumper, `closing` = v - v_lead.
/// Pass gap = +inf for free road.
double idm_acceleration(double v, double v_desired, double gap, double closing, const IdmParams& p = {});

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool has_prev = false;
};

struct PidGains {
  double kp = 1.0;
  double ki = 0.1;
  double kd = 0.05;
  double a_min = -6.0;
  double a_max = 3.0;
  double integral_limit = 5.0;
  double integral_zone = 1.0;  // integrate only while |error| is below this (m/s)
};

/// One PID update on speed error (m/s); returns bounded acceleration.
double pid_acceleration(PidState& state, double target, double v, const PidGains& gains = {});

bool check_collision(const VehicleState& a, const VehicleState& b);
/// Collision -> -50, otherwise v/40 in km/h clipped to [0, 1].
double reward(const Events& events, double ego_speed_kmh);

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class World {
 public:
  const Scenario& scenario() const { return *scenario_; }
  const std::shared_ptr<const Scenario>& scenario_ptr() const { return scenario_; }
  const ScenarioConfig& config() const { return config_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const VehicleState& ego() const { return vehicles_.front(); }
  const DriverParams& driver(std::size_t index) const { return drivers_.at(index); }
  int step_count() const { return steps_; }
  double time() const { return steps_ * kDt; }
  bool terminal() const { return terminal_; }
  const Events& last_events() const { return last_events_; }
  /// Route progress left until the goal (m).
  double distance_to_goal() const { return scenario_->goal_s - ego().s; }

  StepOutcome step(std::size_t action);

  /// Same world after a rigid motion of map and vehicles.
  World transformed(Vec2 shift, double angle) const;

  // Test hooks.
  void set_ego_speed(double v) { vehicles_.front().v = v; }
  void place_vehicle(VehicleState state, DriverParams driver);
  void clear_background();

 private:
  friend World spawn_scenario(const ScenarioConfig& cfg);
  friend double background_policy(const World& world, std::size_t index);

  std::shared_ptr<const Scenario> scenario_;
  ScenarioConfig config_;
  std::vector<VehicleState> vehicles_;
  std::vector<DriverParams> drivers_;
  std::mt19937_64 rng_;
  PidState pid_;
  int steps_ = 0;
  int next_id_ = 1;
  int pending_respawns_ = 0;
  bool terminal_ = false;
  Events last_events_;
  std::vector<Vec2> ego_trace_;  // ego position after every step, index = step

  void advance_background(const std::vector<double>& accel);
  void advance_ego(double target_speed);
  void try_respawn();
  bool corridor_free() const;
  bool spawn_clear(const VehicleState& v, double margin) const;
  VehicleState sample_vehicle_extent(VehicleState v);
  /// Route and upper spawn arclength for a new background vehicle.
  std::pair<int, double> sample_spawn_route(bool allow_upstream);
};

World spawn_scenario(const ScenarioConfig& cfg);
/// IDM car-following plus conflict yielding for background vehicle `index`.
double background_policy(const World& world, std::size_t index);

}  // namespace dqgat::sim
