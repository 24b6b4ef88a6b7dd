#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dqgat/sim/map.hpp"

namespace dqgat::sim {

enum class ScenarioId { kTLeft, kTMerge, kIntCross, kIntLeft, kFiveWay, kRoundabout, kStoppedLead };

/// The six junction scenarios plus the single-lane "stopped_lead" toy task.
ScenarioId parse_scenario(std::string_view name);
std::string to_string(ScenarioId id);
const std::vector<ScenarioId>& junction_scenarios();

/// First point where two routes meet: a crossing or a merge onto a shared lane.
struct ConflictPoint {
  double s_self = 0.0;
  double s_other = 0.0;
  bool merge = false;
};

/// Static per-scenario data shared read-only by every world instance.
struct Scenario {
  ScenarioId id = ScenarioId::kTMerge;
  LaneMap map;
  int ego_route = -1;
  double ego_start_s = 0.0;
  double goal_s = 0.0;
  std::vector<int> background_routes;
  /// conflicts[a][b]: where route a meets route b, from a's point of view.
  std::vector<std::vector<std::optional<ConflictPoint>>> conflicts;
  /// Arclength intervals on the ego route overlapping crossing or merging routes.
  struct Zone {
    double s_begin = 0.0;
    double s_end = 0.0;
    std::vector<int> routes;  // background routes that conflict inside this zone
  };
  std::vector<Zone> ego_zones;
  /// Density scale for spawned vehicle counts.
  double traffic_scale = 1.0;

  const std::optional<ConflictPoint>& conflict(int a, int b) const {
    return conflicts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
  }
  /// Same scenario after a rigid motion of the whole map.
  Scenario transformed(Vec2 shift, double angle) const;
};

/// Builds (or returns the cached) scenario. Thread-safe.
std::shared_ptr<const Scenario> get_scenario(ScenarioId id);
Scenario build_scenario(ScenarioId id);

/// Precomputes conflict points for every route pair.
void compute_conflicts(Scenario& sc);

}  // namespace dqgat::sim
