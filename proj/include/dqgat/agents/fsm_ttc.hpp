#pragma once

#include <vector>

#include "dqgat/agents/policy.hpp"

namespace dqgat::agents {

/// gap / closing speed, +inf when not closing.
double ttc(double gap, double closing_speed);
/// Straight-line TTC between two boxes: gap along the line of centres over the closing speed on that line.
double ttc(const sim::VehicleState& ego, const sim::VehicleState& other);

enum class FsmState { kApproach, kWait, kCreep, kGo };
const char* to_string(FsmState s);

struct FsmTtcConfig {
  double ttc_threshold = 3.0;
  double creep_kmh = 10.0;
  double cruise_kmh = 30.0;
  double min_follow_gap = 4.0;   // m, stop when the lead is closer
  double creep_follow_gap = 12.0;

  void validate() const;
};

/// Conflict zone on the ego route: arclength interval plus its footprint polygon.
struct ConflictZone {
  double s_begin = 0.0;
  double s_end = 0.0;
  std::vector<int> routes;
  sim::Polygon polygon;
};
std::vector<ConflictZone> conflict_zones(const sim::Scenario& scenario);

/// Time for `vehicle` to reach the ego-route conflict point of its own route; 0 when inside it, +inf when past or stopped.
double zone_ttc(const sim::Scenario& scenario, const sim::VehicleState& vehicle);

class FsmTtcPolicy : public Policy {
 public:
  explicit FsmTtcPolicy(FsmTtcConfig cfg = {});
  std::string name() const override { return "fsm_ttc"; }
  void reset(const sim::World& world, std::uint64_t episode_seed) override;
  std::size_t act(const sim::World& world) override;

  FsmState state() const { return state_; }
  const FsmTtcConfig& config() const { return cfg_; }

 private:
  FsmTtcConfig cfg_;
  FsmState state_ = FsmState::kApproach;
  std::vector<ConflictZone> zones_;
  const sim::Scenario* scenario_ = nullptr;

  double follow_limit_kmh(const sim::World& world) const;
};

}  // namespace dqgat::agents
