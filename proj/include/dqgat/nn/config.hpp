#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dqgat/nn/layers.hpp"

namespace dqgat::nn {

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::size_t kNodeFeatureDim = 10;

enum class NetworkKind { kDqgat, kGcnUniform, kGcnDistance, kDenseBev };

/// Accepts "dqgat", "gcn_uniform", "gcn_distance", "dense_bev".
NetworkKind parse_network_kind(std::string_view name);
std::string to_string(NetworkKind kind);

struct QNetConfig {
  NetworkKind kind = NetworkKind::kDqgat;
  std::size_t bev_channels = 3;
  std::size_t bev_rows = 100;
  std::size_t bev_cols = 140;
  std::vector<std::size_t> encoder_channels{8, 16, 32, 64};
  std::size_t z_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t gat_dim = 64;  // per head
  std::size_t heads1 = 4;
  std::size_t heads2 = 4;
  std::size_t stream_hidden = 64;
  std::size_t num_actions = kNumActions;
  std::size_t max_nodes = 16;
  ScoreActivation score = ScoreActivation::kRelu;
  double sigma0 = 0.5;

  /// Desk-scale defaults for the given network kind (dense_bev adds a speed channel).
  static QNetConfig desk(NetworkKind kind = NetworkKind::kDqgat);
  /// Z=512, E=128, F=256, 200x280 raster.
  static QNetConfig paper_scale();

  void validate() const;
  std::string to_json() const;
  static QNetConfig from_json(const std::string& text);
  /// FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace dqgat::nn
