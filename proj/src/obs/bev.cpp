#include "dqgat/obs/bev.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dqgat/sim/map.hpp"

namespace dqgat::obs {

namespace {

// Sub-micron shift of the sampling lattice so map edges on round coordinates never sit exactly on a pixel centre.
constexpr double kCentreOffset = 1e-6;

/// Pixel-centre grid coordinates: gx along rows (forward), gy along columns (left to right).
struct GridMap {
  EgoFrame frame;
  const BevSpec* spec;

  sim::Vec2 operator()(sim::Vec2 p) const {
    const sim::Vec2 l = frame.to_local(p);
    return {(l.x + spec->behind + kCentreOffset) / spec->resolution - 0.5,
            (spec->half_width() - l.y + kCentreOffset) / spec->resolution - 0.5};
  }
};

class Plane {
 public:
  Plane(std::uint8_t* data, int rows, int cols) : data_(data), rows_(rows), cols_(cols) {}

  /// Even-odd scanline fill of every pixel whose centre lies inside the polygon.
  void fill(const std::vector<sim::Vec2>& poly, std::uint8_t value) {
    if (poly.size() < 3) return;
    double lo = poly[0].x, hi = poly[0].x, clo = poly[0].y, chi = poly[0].y;
    for (const auto& p : poly) {
      lo = std::min(lo, p.x);
      hi = std::max(hi, p.x);
      clo = std::min(clo, p.y);
      chi = std::max(chi, p.y);
    }
    if (hi < 0 || lo > rows_ - 1 || chi < 0 || clo > cols_ - 1) return;
    const int r0 = std::max(0, static_cast<int>(std::ceil(lo)));
    const int r1 = std::min(rows_ - 1, static_cast<int>(std::floor(hi)));
    std::vector<double> xs;
    for (int r = r0; r <= r1; ++r) {
      xs.clear();
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[j];
        const auto& b = poly[i];
        if ((a.x <= r) != (b.x <= r)) xs.push_back(a.y + (r - a.x) / (b.x - a.x) * (b.y - a.y));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
        const int c1 = std::min(cols_ - 1, static_cast<int>(std::floor(xs[k + 1])));
        if (c0 <= c1) std::fill(data_ + r * cols_ + c0, data_ + r * cols_ + c1 + 1, value);
      }
    }
  }

  /// 1-pixel polyline by dense sampling and rounding to the nearest pixel centre.
  void line(const std::vector<sim::Vec2>& pts, std::uint8_t value) {
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const auto& a = pts[i];
      const auto& b = pts[i + 1];
      if (std::max(a.x, b.x) < -1 || std::min(a.x, b.x) > rows_ || std::max(a.y, b.y) < -1 ||
          std::min(a.y, b.y) > cols_) {
        continue;
      }
      const int n = static_cast<int>(std::ceil(2.0 * std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)))) + 1;
      for (int k = 0; k <= n; ++k) {
        const double t = double(k) / n;
        const int r = static_cast<int>(std::floor(a.x + t * (b.x - a.x) + 0.5));
        const int c = static_cast<int>(std::floor(a.y + t * (b.y - a.y) + 0.5));
        if (r >= 0 && r < rows_ && c >= 0 && c < cols_) data_[r * cols_ + c] = value;
      }
    }
  }

 private:
  std::uint8_t* data_;
  int rows_;
  int cols_;
};

std::vector<sim::Vec2> to_grid(const GridMap& g, const std::vector<sim::Vec2>& pts) {
  std::vector<sim::Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(g(p));
  return out;
}

std::vector<sim::Vec2> footprint(const sim::VehicleState& v) {
  const auto c = v.box().corners();
  return {c.begin(), c.end()};
}

}  // namespace

void BevSpec::validate() const {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("bev: rows and cols must be positive");
  if (!(resolution > 0)) throw std::invalid_argument("bev: resolution must be positive");
  if (!(behind >= 0 && behind < rows * resolution)) throw std::invalid_argument("bev: behind must lie inside the region");
}

BevGrid rasterize(const sim::LaneMap& map, const sim::Polyline& route, std::span<const sim::VehicleState> vehicles,
                  std::size_t ego_index, const BevSpec& spec) {
  spec.validate();
  const auto& ego = vehicles[ego_index];
  BevGrid g;
  g.channels = spec.channels();
  g.rows = spec.rows;
  g.cols = spec.cols;
  g.resolution = spec.resolution;
  g.data.assign(static_cast<std::size_t>(g.channels) * g.rows * g.cols, 0);
  const GridMap gm{{ego.position(), ego.psi}, &spec};
  auto plane = [&](int c) { return Plane(g.data.data() + g.index(c, 0, 0), g.rows, g.cols); };

  auto drivable = plane(kChannelMap);
  for (const auto& poly : map.drivable()) drivable.fill(to_grid(gm, poly), 1);
  for (const auto& m : map.markings()) drivable.line(to_grid(gm, m.points()), 0);

  plane(kChannelRoute).fill(to_grid(gm, sim::ribbon(route, sim::kLaneWidth)), 1);

  auto cars = plane(kChannelVehicles);
  for (const auto& v : vehicles) cars.fill(to_grid(gm, footprint(v)), 1);
  if (spec.speed_channel) {
    auto speed = plane(kChannelSpeed);
    for (const auto& v : vehicles) {
      const double q = std::clamp(v.v / kSpeedChannelScale, 0.0, 1.0);
      speed.fill(to_grid(gm, footprint(v)), static_cast<std::uint8_t>(std::lround(q * 255.0)));
    }
  }
  return g;
}

BevGrid rasterize(const sim::World& world, const BevSpec& spec) {
  const auto& sc = world.scenario();
  return rasterize(sc.map, sc.map.route(sc.ego_route).path, world.vehicles(), 0, spec);
}

CompressedBev compress(const BevGrid& grid) {
  CompressedBev c{grid.channels, grid.rows, grid.cols, grid.resolution, {}, {}};
  for (std::size_t i = 0; i < grid.data.size();) {
    std::size_t j = i;
    while (j < grid.data.size() && grid.data[j] == grid.data[i]) ++j;
    c.values.push_back(grid.data[i]);
    c.runs.push_back(static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return c;
}

BevGrid decompress(const CompressedBev& c) {
  BevGrid g{c.channels, c.rows, c.cols, c.resolution, {}};
  g.data.reserve(static_cast<std::size_t>(c.channels) * c.rows * c.cols);
  for (std::size_t k = 0; k < c.values.size(); ++k) g.data.insert(g.data.end(), c.runs[k], c.values[k]);
  if (g.data.size() != static_cast<std::size_t>(c.channels) * c.rows * c.cols) {
    throw std::invalid_argument("compressed raster has inconsistent run lengths");
  }
  return g;
}

std::string to_pgm(const BevGrid& grid) {
  std::string out = "P5\n" + std::to_string(grid.cols) + " " + std::to_string(grid.rows * grid.channels) + "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(grid.rows) * grid.cols;
  out.reserve(out.size() + grid.data.size());
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    const bool binary = i / plane != static_cast<std::size_t>(kChannelSpeed);
    out.push_back(static_cast<char>(binary ? (grid.data[i] ? 255 : 0) : grid.data[i]));
  }
  return out;
}

std::string to_pgm(std::span<const float> values, int rows, int cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("to_pgm: size mismatch");
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (float v : values) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

void write_pgm(const std::filesystem::path& path, const BevGrid& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const auto s = to_pgm(grid);
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace dqgat::obs
