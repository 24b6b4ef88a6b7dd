#pragma once

#include <array>
#include <span>
#include <vector>

#include "dqgat/obs/bev.hpp"

namespace dqgat::obs {

inline constexpr std::size_t kFeatureDim = 10;
using NodeFeatures = std::array<double, kFeatureDim>;  // x, y, d, psi, vx, vy, ax, ay, w, l

/// Ego first, then other vehicles inside the region, nearest first.
struct NodeFeatureSet {
  std::vector<NodeFeatures> features;
  std::vector<int> ids;

  std::size_t size() const { return features.size(); }
};

/// Features of `other` in the frame of `ego`.
NodeFeatures node_features(const sim::VehicleState& ego, const sim::VehicleState& other);
bool in_region(const BevSpec& spec, sim::Vec2 local);

NodeFeatureSet build_nodes(std::span<const sim::VehicleState> vehicles, std::size_t ego_index, const BevSpec& region,
                           std::size_t max_nodes);
NodeFeatureSet build_nodes(const sim::World& world, const BevSpec& region, std::size_t max_nodes);

}  // namespace dqgat::obs
