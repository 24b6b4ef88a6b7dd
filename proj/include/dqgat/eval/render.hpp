#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dqgat/nn/qnetwork.hpp"
#include "dqgat/sim/replay.hpp"

namespace dqgat::eval {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0);
  std::uint8_t* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * channels]; }
  bool operator==(const Image&) const = default;
};

/// Binary PPM (3 channels) or PGM (1 channel).
std::string encode_pnm(const Image& img);
void write_pnm(const std::filesystem::path& path, const Image& img);

struct RenderOptions {
  double pixels_per_metre = 4.0;
  double margin = 4.0;
  /// When set, a BEV panel with this network's saliency is drawn beside each frame.
  const nn::QNetwork<float>* saliency_net = nullptr;
};

/// Top-down frames of a logged episode, one per logged step after the spawn state.
std::vector<Image> render_replay(const sim::Replay& replay, const RenderOptions& options = {});
/// Renders and writes frame_0001.ppm ...; returns the number of frames.
std::size_t write_frames(const sim::Replay& replay, const std::filesystem::path& out_dir,
                         const RenderOptions& options = {});

}  // namespace dqgat::eval
