#include "dqgat/obs/observation.hpp"

#include <numbers>
#include <stdexcept>

namespace dqgat::obs {

namespace {

constexpr double kRegionLength = 50.0;
constexpr double kPositionScale = 50.0;
constexpr double kSpeedScale = 10.0;
constexpr double kAccelScale = 5.0;
constexpr double kExtentScale = 5.0;

}  // namespace

ObsConfig ObsConfig::for_network(const nn::QNetConfig& cfg) {
  ObsConfig o;
  o.bev.rows = static_cast<int>(cfg.bev_rows);
  o.bev.cols = static_cast<int>(cfg.bev_cols);
  o.bev.resolution = kRegionLength / static_cast<double>(cfg.bev_rows);
  o.bev.speed_channel = cfg.bev_channels == 4;
  if (cfg.bev_channels != 3 && cfg.bev_channels != 4) throw std::invalid_argument("observations have 3 or 4 channels");
  o.max_nodes = cfg.max_nodes;
  return o;
}

Observation observe(const sim::World& world, const ObsConfig& cfg) {
  return {compress(rasterize(world, cfg.bev)), build_nodes(world, cfg.bev, cfg.max_nodes)};
}

Observation observe(const sim::Scenario& scenario, std::span<const sim::VehicleState> vehicles, const ObsConfig& cfg) {
  if (vehicles.empty()) throw std::invalid_argument("observation needs the ego vehicle");
  return {compress(rasterize(scenario.map, scenario.map.route(scenario.ego_route).path, vehicles, 0, cfg.bev)),
          build_nodes(vehicles, 0, cfg.bev, cfg.max_nodes)};
}

NodeFeatures scale_features(const NodeFeatures& f) {
  return {f[0] / kPositionScale, f[1] / kPositionScale, f[2] / kPositionScale, f[3] / std::numbers::pi,
          f[4] / kSpeedScale,    f[5] / kSpeedScale,    f[6] / kAccelScale,    f[7] / kAccelScale,
          f[8] / kExtentScale,   f[9] / kExtentScale};
}

nn::NetInput<float> make_batch(std::span<const Observation* const> obs, const nn::QNetConfig& cfg) {
  if (obs.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t B = obs.size();
  std::size_t N = 1;
  for (const auto* o : obs) N = std::max(N, o->nodes.size());
  const std::size_t C = cfg.bev_channels, H = cfg.bev_rows, W = cfg.bev_cols;
  const std::size_t plane = C * H * W;

  std::vector<float> bev(B * plane);
  std::vector<float> feats(B * N * kFeatureDim, 0.0f);
  nn::NetInput<float> in;
  in.batch = B;
  in.nodes = N;
  in.valid.assign(B * N, 0);
  in.positions.assign(B * N * 2, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& o = *obs[b];
    if (static_cast<std::size_t>(o.bev.channels) != C || static_cast<std::size_t>(o.bev.rows) != H ||
        static_cast<std::size_t>(o.bev.cols) != W) {
      throw std::invalid_argument("make_batch: observation raster does not match the network input shape");
    }
    if (o.nodes.size() == 0) throw std::invalid_argument("make_batch: observation without an ego node");
    // Decode runs straight into the float buffer.
    float* dst = bev.data() + b * plane;
    std::size_t pos = 0;
    const std::size_t speed_begin = static_cast<std::size_t>(kChannelSpeed) * H * W;
    for (std::size_t k = 0; k < o.bev.values.size(); ++k) {
      const std::size_t end = pos + o.bev.runs[k];
      for (; pos < end; ++pos) dst[pos] = pos >= speed_begin ? o.bev.values[k] / 255.0f : float(o.bev.values[k]);
    }
    for (std::size_t n = 0; n < o.nodes.size(); ++n) {
      const auto s = scale_features(o.nodes.features[n]);
      for (std::size_t f = 0; f < kFeatureDim; ++f) feats[(b * N + n) * kFeatureDim + f] = static_cast<float>(s[f]);
      in.valid[b * N + n] = 1;
      in.positions[(b * N + n) * 2] = o.nodes.features[n][0];
      in.positions[(b * N + n) * 2 + 1] = o.nodes.features[n][1];
    }
  }
  in.bev = nn::Tensor<float>({B, C, H, W}, std::move(bev));
  in.features = nn::Tensor<float>({B * N, kFeatureDim}, std::move(feats));
  return in;
}

nn::NetInput<float> make_input(const Observation& obs, const nn::QNetConfig& cfg) {
  const Observation* p = &obs;
  return make_batch(std::span<const Observation* const>(&p, 1), cfg);
}

}  // namespace dqgat::obs
