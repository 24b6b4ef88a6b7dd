#include "dqgat/eval/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "dqgat/eval/introspect.hpp"
#include "dqgat/obs/observation.hpp"

namespace dqgat::eval {

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

std::string encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("PNM images have 1 or 3 channels");
  std::string out = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(img.data.begin(), img.data.end());
  return out;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto bytes = encode_pnm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kBackground{30, 34, 30};
constexpr Rgb kRoad{105, 105, 105};
constexpr Rgb kMarking{235, 235, 235};
constexpr Rgb kRoute{70, 170, 90};
constexpr Rgb kEgo{220, 50, 40};
constexpr Rgb kOther{70, 130, 220};
constexpr Rgb kCrash{250, 220, 40};
constexpr Rgb kText{255, 255, 255};

// 3x5 glyphs, rows top to bottom, 3 bits per row.
const std::array<std::uint16_t, 5>* glyph(char c) {
  static const std::array<std::uint16_t, 5> digits[10] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static const std::array<std::uint16_t, 5> letter_a{7, 5, 7, 5, 5}, letter_t{7, 2, 2, 2, 2}, letter_v{5, 5, 5, 5, 2},
      letter_s{7, 4, 7, 1, 7}, letter_c{7, 4, 4, 4, 7}, letter_j{1, 1, 1, 5, 7}, dash{0, 0, 7, 0, 0},
      dot{0, 0, 0, 0, 2};
  if (c >= '0' && c <= '9') return &digits[c - '0'];
  switch (c) {
    case 'A': return &letter_a;
    case 'T': return &letter_t;
    case 'V': return &letter_v;
    case 'S': return &letter_s;
    case 'C': return &letter_c;
    case 'J': return &letter_j;
    case '-': return &dash;
    case '.': return &dot;
    default: return nullptr;
  }
}

void put(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = img.px(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

void draw_text(Image& img, int x, int y, const std::string& text, int scale) {
  for (char ch : text) {
    if (const auto* g = glyph(ch)) {
      for (int r = 0; r < 5; ++r) {
        for (int b = 0; b < 3; ++b) {
          if (!((*g)[r] & (4 >> b))) continue;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) put(img, x + b * scale + dx, y + r * scale + dy, kText);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

struct View {
  double x0, y1, ppm;
  int width, height;
  // World point of a pixel centre; image y grows downward.
  sim::Vec2 world(int px, int py) const { return {x0 + (px + 0.5) / ppm, y1 - (py + 0.5) / ppm}; }
  std::pair<int, int> pixel(sim::Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - x0) * ppm)), static_cast<int>(std::floor((y1 - p.y) * ppm))};
  }
};

void fill_polygon(Image& img, const View& v, const sim::Polygon& poly, Rgb c) {
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (auto p : poly) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  const auto [ax, ay] = v.pixel({lo_x, hi_y});
  const auto [bx, by] = v.pixel({hi_x, lo_y});
  for (int y = std::max(ay, 0); y <= std::min(by, img.height - 1); ++y) {
    for (int x = std::max(ax, 0); x <= std::min(bx, img.width - 1); ++x) {
      if (sim::point_in_polygon(poly, v.world(x, y))) put(img, x, y, c);
    }
  }
}

void draw_polyline(Image& img, const View& v, const sim::Polyline& line, Rgb c) {
  const double step = 0.5 / v.ppm;
  for (double s = 0.0; s <= line.length(); s += step) {
    const auto [x, y] = v.pixel(line.point_at(s));
    put(img, x, y, c);
  }
}

Image bev_panel(const sim::Scenario& sc, const std::vector<sim::VehicleState>& vehicles, const nn::QNetwork<float>& net,
                int height) {
  const auto oc = obs::ObsConfig::for_network(net.config());
  const auto o = obs::observe(sc, vehicles, oc);
  const auto grid = obs::decompress(o.bev);
  const auto sal = saliency(net, o);
  const int scale = std::max(1, height / grid.cols);
  // Forward points up: BEV rows (forward) map to image rows bottom-up, BEV columns (left to right) to image columns.
  Image img(grid.rows * scale, grid.cols * scale, 3);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double road = grid.value(grid.index(0, r, c));
      const double veh = grid.value(grid.index(2, r, c));
      const double heat = sal.pixel[static_cast<std::size_t>(r) * grid.cols + c];
      const auto base = static_cast<int>(40 + 60 * road + 100 * veh);
      const Rgb col{static_cast<std::uint8_t>(std::min(255.0, base + 200 * heat)),
                    static_cast<std::uint8_t>(base * (1.0 - heat)), static_cast<std::uint8_t>(base * (1.0 - heat))};
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) put(img, (grid.cols - 1 - c) * scale + dx, (grid.rows - 1 - r) * scale + dy, col);
      }
    }
  }
  return img;
}

}  // namespace

std::vector<Image> render_replay(const sim::Replay& replay, const RenderOptions& options) {
  const auto frames = replay.frames();
  std::vector<Image> out;
  if (frames.size() <= 1) return out;
  const auto sc = sim::get_scenario(replay.header.config.scenario);
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const auto& poly : sc->map.drivable()) {
    for (auto p : poly) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  }
  const double ppm = options.pixels_per_metre;
  View view{lo_x - options.margin, hi_y + options.margin, ppm,
            static_cast<int>(std::ceil((hi_x - lo_x + 2 * options.margin) * ppm)),
            static_cast<int>(std::ceil((hi_y - lo_y + 2 * options.margin) * ppm))};

  Image base(view.width, view.height, 3);
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) put(base, x, y, kBackground);
  }
  for (const auto& poly : sc->map.drivable()) fill_polygon(base, view, poly, kRoad);
  for (const auto& m : sc->map.markings()) draw_polyline(base, view, m, kMarking);
  draw_polyline(base, view, sc->map.route(sc->ego_route).path, kRoute);

  for (std::size_t f = 1; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    Image img = base;
    for (std::size_t i = frame.vehicles.size(); i-- > 0;) {
      const auto& v = frame.vehicles[i];
      Rgb col = i == 0 ? kEgo : kOther;
      if (i == 0 && frame.events.collision) col = kCrash;
      const auto corners = v.box().corners();
      fill_polygon(img, view, sim::Polygon(corners.begin(), corners.end()), col);
    }
    char label[64];
    const char* ev = frame.events.collision ? "C" : frame.events.success ? "S" : frame.events.jam_timeout ? "J" : "";
    std::snprintf(label, sizeof label, "T%d A%d V%.0f %s", frame.t, frame.ego_action,
                  sim::ms_to_kmh(frame.vehicles.front().v), ev);
    draw_text(img, 4, 4, label, 2);
    if (options.saliency_net) {
      const auto panel = bev_panel(*sc, frame.vehicles, *options.saliency_net, view.height);
      Image joined(img.width + panel.width, std::max(img.height, panel.height), 3);
      for (int y = 0; y < img.height; ++y) std::copy_n(img.px(0, y), img.width * 3, joined.px(0, y));
      for (int y = 0; y < panel.height; ++y) {
        std::copy_n(const_cast<Image&>(panel).px(0, y), panel.width * 3, joined.px(img.width, y));
      }
      img = std::move(joined);
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::size_t write_frames(const sim::Replay& replay, const std::filesystem::path& out_dir,
                         const RenderOptions& options) {
  std::filesystem::create_directories(out_dir);
  const auto frames = render_replay(replay, options);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i + 1);
    write_pnm(out_dir / name, frames[i]);
  }
  return frames.size();
}

}  // namespace dqgat::eval
