#pragma once

#include <span>

#include "dqgat/nn/qnetwork.hpp"
#include "dqgat/obs/bev.hpp"
#include "dqgat/obs/nodes.hpp"

namespace dqgat::obs {

struct ObsConfig {
  BevSpec bev;
  std::size_t max_nodes = 16;

  /// Raster shape and node capacity the network expects; the physical extent stays 50 m x 70 m.
  static ObsConfig for_network(const nn::QNetConfig& cfg);
};

/// Scene observation as stored in replay: compressed raster plus node features.
struct Observation {
  CompressedBev bev;
  NodeFeatureSet nodes;
};

Observation observe(const sim::World& world, const ObsConfig& cfg);
/// Same observation from logged vehicle states (ego first) on a scenario's map.
Observation observe(const sim::Scenario& scenario, std::span<const sim::VehicleState> vehicles, const ObsConfig& cfg);

/// Per-feature normalisation applied before the node MLP.
NodeFeatures scale_features(const NodeFeatures& f);

/// Stacks observations into one padded network batch.
nn::NetInput<float> make_batch(std::span<const Observation* const> obs, const nn::QNetConfig& cfg);
nn::NetInput<float> make_input(const Observation& obs, const nn::QNetConfig& cfg);

}  // namespace dqgat::obs
