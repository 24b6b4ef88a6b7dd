#include "dqgat/obs/nodes.hpp"

#include <algorithm>
#include <cmath>

namespace dqgat::obs {

NodeFeatures node_features(const sim::VehicleState& ego, const sim::VehicleState& other) {
  const EgoFrame frame{ego.position(), ego.psi};
  const sim::Vec2 p = frame.to_local(other.position());
  const double psi = sim::wrap_angle(other.psi - ego.psi);
  const double c = std::cos(psi), s = std::sin(psi);
  return {p.x, p.y, std::hypot(p.x, p.y), psi, other.v * c, other.v * s, other.a * c, other.a * s, other.w, other.l};
}

bool in_region(const BevSpec& spec, sim::Vec2 local) {
  return local.x >= -spec.behind && local.x <= spec.ahead() && std::abs(local.y) <= spec.half_width();
}

NodeFeatureSet build_nodes(std::span<const sim::VehicleState> vehicles, std::size_t ego_index, const BevSpec& region,
                           std::size_t max_nodes) {
  NodeFeatureSet out;
  if (max_nodes == 0) return out;
  const auto& ego = vehicles[ego_index];
  NodeFeatures self{};
  self[4] = ego.v;
  self[6] = ego.a;
  self[8] = ego.w;
  self[9] = ego.l;
  out.features.push_back(self);
  out.ids.push_back(ego.id);

  struct Candidate {
    double d;
    int id;
    NodeFeatures f;
  };
  std::vector<Candidate> others;
  const EgoFrame frame{ego.position(), ego.psi};
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (i == ego_index) continue;
    if (!in_region(region, frame.to_local(vehicles[i].position()))) continue;
    auto f = node_features(ego, vehicles[i]);
    others.push_back({f[2], vehicles[i].id, f});
  }
  std::sort(others.begin(), others.end(), [](const Candidate& a, const Candidate& b) {
    return a.d != b.d ? a.d < b.d : a.id < b.id;
  });
  for (const auto& c : others) {
    if (out.size() >= max_nodes) break;
    out.features.push_back(c.f);
    out.ids.push_back(c.id);
  }
  return out;
}

NodeFeatureSet build_nodes(const sim::World& world, const BevSpec& region, std::size_t max_nodes) {
  return build_nodes(world.vehicles(), 0, region, max_nodes);
}

}  // namespace dqgat::obs
