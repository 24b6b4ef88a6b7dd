#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dqgat/sim/world.hpp"

namespace dqgat::obs {

inline constexpr int kChannelMap = 0;
inline constexpr int kChannelRoute = 1;
inline constexpr int kChannelVehicles = 2;
inline constexpr int kChannelSpeed = 3;  // dense_bev ablation only
/// Speed (m/s) that saturates the speed channel.
inline constexpr double kSpeedChannelScale = 12.5;

/// Region of interest anchored at the ego: `behind` metres behind, the rest ahead, centred laterally.
struct BevSpec {
  int rows = 100;
  int cols = 140;
  double resolution = 0.5;  // m per pixel
  double behind = 15.0;
  bool speed_channel = false;

  int channels() const { return speed_channel ? 4 : 3; }
  double ahead() const { return rows * resolution - behind; }
  double half_width() const { return 0.5 * cols * resolution; }
  void validate() const;

  static BevSpec desk() { return {}; }
  /// 200 x 280 at 0.25 m: 35 m ahead, 15 m behind, 35 m to each side.
  static BevSpec paper() { return {200, 280, 0.25, 15.0, false}; }
};

/// Channel-major raster; binary channels hold 0/1, the speed channel 0..255.
struct BevGrid {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  double resolution = 0.0;
  std::vector<std::uint8_t> data;

  std::size_t index(int c, int r, int col) const {
    return (static_cast<std::size_t>(c) * rows + r) * cols + col;
  }
  std::uint8_t at(int c, int r, int col) const { return data[index(c, r, col)]; }
  /// Network value of one cell: binary channels as-is, speed channel scaled to [0, 1].
  float value(std::size_t i) const {
    const auto plane = static_cast<std::size_t>(rows) * cols;
    return i / plane == kChannelSpeed ? data[i] / 255.0f : float(data[i]);
  }
  bool operator==(const BevGrid&) const = default;
};

/// Ego-frame transform: x forward, y left.
struct EgoFrame {
  sim::Vec2 origin;
  double heading = 0.0;

  sim::Vec2 to_local(sim::Vec2 p) const { return sim::rotate(p - origin, -heading); }
};

BevGrid rasterize(const sim::LaneMap& map, const sim::Polyline& route, std::span<const sim::VehicleState> vehicles,
                  std::size_t ego_index, const BevSpec& spec);
BevGrid rasterize(const sim::World& world, const BevSpec& spec);

/// Run-length encoded raster for replay storage.
struct CompressedBev {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  double resolution = 0.0;
  std::vector<std::uint8_t> values;
  std::vector<std::uint32_t> runs;

  std::size_t bytes() const { return values.size() + 4 * runs.size(); }
};
CompressedBev compress(const BevGrid& grid);
BevGrid decompress(const CompressedBev& c);

/// Binary PGM (P5) with the channels stacked vertically; binary cells map to 255.
std::string to_pgm(const BevGrid& grid);
void write_pgm(const std::filesystem::path& path, const BevGrid& grid);
/// Grayscale image of arbitrary float values in [0, 1].
std::string to_pgm(std::span<const float> values, int rows, int cols);

}  // namespace dqgat::obs
