#include "beamgrid/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "beamgrid/error.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/parallel.hpp"
#include "beamgrid/random.hpp"

namespace beamgrid {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpeedOfLight = 299792458.0;
constexpr double kMinCellLength = 1e-9;  // metres; shorter crossings are grid-line touches

double wrap_two_pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a >= 2.0 * kPi || a == 0.0 ? 0.0 : a;
}

double distance(const Point3& a, const Point3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

// Azimuth (east = 0, counter-clockwise) of the horizontal vector a -> b.
double bearing(const Point3& a, const Point3& b) { return wrap_two_pi(std::atan2(-(b.y - a.y), b.x - a.x)); }

double elevation(const Point3& a, const Point3& b) {
  return std::atan2(b.z - a.z, std::hypot(b.x - a.x, b.y - a.y));
}

bool on_street_lattice(int i, int offset, const CityStyle& style) {
  const int m = ((i + offset) % style.block_pitch + style.block_pitch) % style.block_pitch;
  return m < style.street_width;
}

// `bounce` is the reflection point, or the Rx itself for the direct path.
PathParams make_path(const Point3& tx, const Point3& bounce, const Point3& rx, double length, double loss_db,
                     bool reflected, double wavelength) {
  const Point3& arrival_from = reflected ? bounce : tx;
  PathParams p;
  p.magnitude = wavelength / (4.0 * kPi * length) * std::pow(10.0, -loss_db / 20.0);
  p.phase = wrap_two_pi(2.0 * kPi * length / wavelength + (reflected ? kPi : 0.0));
  p.aod_azimuth = bearing(tx, bounce);
  p.aod_elevation = elevation(tx, bounce);
  p.aoa_azimuth = bearing(rx, arrival_from);
  return p;
}

}  // namespace

HeightMap generate_city(int rows, int cols, std::uint64_t seed, const CityStyle& style) {
  require(rows >= 16 && cols >= 16, "city maps must be at least 16 x 16");
  require(style.block_pitch > style.street_width && style.street_width >= 0, "street lattice must leave blocks");
  require(style.min_building >= 1 && style.max_building >= style.min_building, "invalid building size range");
  require(style.building_fraction >= 0.0 && style.building_fraction < 1.0, "building fraction must be in [0, 1)");
  require(style.vegetation_fraction >= 0.0 && style.vegetation_fraction < 1.0,
          "vegetation fraction must be in [0, 1)");

  HeightMap map(rows, cols);
  Rng rng(seed);
  const int row_offset = static_cast<int>(uniform_int(rng, 0, style.block_pitch - 1));
  const int col_offset = static_cast<int>(uniform_int(rng, 0, style.block_pitch - 1));
  const double total = static_cast<double>(rows) * cols;

  constexpr int kMaxAttempts = 20000;
  std::size_t built = 0;
  for (int attempt = 0; attempt < kMaxAttempts && built < style.building_fraction * total; ++attempt) {
    const int h = static_cast<int>(uniform_int(rng, style.min_building, style.max_building));
    const int w = static_cast<int>(uniform_int(rng, style.min_building, style.max_building));
    const int r0 = static_cast<int>(uniform_int(rng, 0, rows - h));
    const int c0 = static_cast<int>(uniform_int(rng, 0, cols - w));
    const double height = uniform(rng, style.min_height_m, style.max_height_m);
    bool fits = true;
    for (int r = r0; r < r0 + h && fits; ++r) fits = !on_street_lattice(r, row_offset, style);
    for (int c = c0; c < c0 + w && fits; ++c) fits = !on_street_lattice(c, col_offset, style);
    if (!fits) continue;
    for (int r = r0; r < r0 + h; ++r) {
      for (int c = c0; c < c0 + w; ++c) {
        if (map.building(r, c) == 0.0) ++built;
        map.building(r, c) = height;
      }
    }
  }

  std::size_t planted = 0;
  for (int attempt = 0; attempt < kMaxAttempts && planted < style.vegetation_fraction * total; ++attempt) {
    const double cr = uniform(rng, 0.0, rows);
    const double cc = uniform(rng, 0.0, cols);
    const double radius = uniform(rng, style.min_tree_radius, style.max_tree_radius);
    const double height = uniform(rng, style.min_tree_height_m, style.max_tree_height_m);
    const int r_lo = std::max(0, static_cast<int>(std::floor(cr - radius)));
    const int r_hi = std::min(rows - 1, static_cast<int>(std::ceil(cr + radius)));
    const int c_lo = std::max(0, static_cast<int>(std::floor(cc - radius)));
    const int c_hi = std::min(cols - 1, static_cast<int>(std::ceil(cc + radius)));
    for (int r = r_lo; r <= r_hi; ++r) {
      for (int c = c_lo; c <= c_hi; ++c) {
        const double dr = r + 0.5 - cr;
        const double dc = c + 0.5 - cc;
        if (dr * dr + dc * dc > radius * radius) continue;
        if (map.vegetation(r, c) == 0.0) ++planted;
        map.vegetation(r, c) = std::max(map.vegetation(r, c), height);
      }
    }
  }
  return map;
}

bool is_edge_pixel(const HeightMap& map, int r, int c) {
  if (!map.building.contains(r, c) || !map.is_building(r, c)) return false;
  constexpr int kDr[] = {-1, 0, 0, 1};
  constexpr int kDc[] = {0, -1, 1, 0};
  for (int i = 0; i < 4; ++i) {
    const int nr = r + kDr[i];
    const int nc = c + kDc[i];
    if (map.building.contains(nr, nc) && !map.is_building(nr, nc)) return true;
  }
  return false;
}

TxSite place_tx(const HeightMap& map, std::uint64_t seed, double mast_m) {
  require(mast_m >= 0.0, "mast height must be non-negative");
  std::vector<Pixel> edges;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      if (is_edge_pixel(map, r, c)) edges.push_back({r, c});
    }
  }
  if (edges.empty()) fail(ErrorKind::kNoValidSite, "map has no rooftop edge pixel");

  Rng rng(seed);
  const Pixel site = edges[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(edges.size()) - 1))];

  // Neighbours in increasing flat-index order: north, west, east, south.
  constexpr int kDr[] = {-1, 0, 0, 1};
  constexpr int kDc[] = {0, -1, 1, 0};
  constexpr double kAzimuth[] = {kPi / 2.0, kPi, 0.0, 3.0 * kPi / 2.0};
  TxSite tx;
  tx.pixel = site;
  tx.height_m = map.building[site] + mast_m;
  tx.frame.downtilt = kPi / 4.0;
  for (int i = 0; i < 4; ++i) {
    const int nr = site.row + kDr[i];
    const int nc = site.col + kDc[i];
    if (map.building.contains(nr, nc) && !map.is_building(nr, nc)) {
      tx.frame.boresight_azimuth = kAzimuth[i];
      break;
    }
  }
  return tx;
}

double SceneConfig::wavelength_m() const { return kSpeedOfLight / carrier_hz; }

void SceneConfig::validate() const {
  require(carrier_hz > 0.0, "carrier frequency must be positive");
  require(reflection_loss_db >= 0.0, "reflection loss must be non-negative");
  require(vegetation_db_per_m >= 0.0, "vegetation attenuation must be non-negative");
  require(max_reflections == 0 || max_reflections == 1, "only first-order reflections are traced");
  require(tx_mast_m >= 0.0, "mast height must be non-negative");
}

Point3 tx_position(const HeightMap& map, const TxSite& tx) {
  const double res = map.resolution_m;
  const double ex = std::cos(tx.frame.boresight_azimuth);
  const double ey = -std::sin(tx.frame.boresight_azimuth);
  const double reach = 0.5 * res / std::max(std::abs(ex), std::abs(ey));
  return {(tx.pixel.col + 0.5) * res + reach * ex, (tx.pixel.row + 0.5) * res + reach * ey, tx.height_m};
}

Point3 rx_position(const HeightMap& map, int r, int c, double rx_height_m) {
  const double res = map.resolution_m;
  return {(c + 0.5) * res, (r + 0.5) * res, rx_height_m};
}

SegmentTrace trace_segment(const HeightMap& map, const Point3& a, const Point3& b) {
  const double res = map.resolution_m;
  const double x0 = a.x / res;
  const double y0 = a.y / res;
  const double dx = b.x / res - x0;
  const double dy = b.y / res - y0;
  const double ground_len = std::hypot(dx, dy) * res;
  const double len = distance(a, b);

  SegmentTrace out;
  // Returns false once the segment is blocked.
  auto visit = [&](int r, int c, double t0, double t1) {
    if (!map.building.contains(r, c)) return true;
    if (ground_len > 0.0 && (t1 - t0) * ground_len <= kMinCellLength) return true;
    const double za = a.z + t0 * (b.z - a.z);
    const double zb = a.z + t1 * (b.z - a.z);
    if (std::min(za, zb) < map.building(r, c)) {
      out.visible = false;
      return false;
    }
    const double canopy = map.vegetation(r, c);
    if (canopy > 0.0) {
      double below = 0.0;
      if (za < canopy && zb < canopy) {
        below = t1 - t0;
      } else if (za < canopy || zb < canopy) {
        const double t_cross = t0 + (canopy - za) / (zb - za) * (t1 - t0);
        below = za < canopy ? t_cross - t0 : t1 - t_cross;
      }
      out.vegetation_m += below * len;
    }
    return true;
  };

  int cx = static_cast<int>(std::floor(x0));
  int cy = static_cast<int>(std::floor(y0));
  if (ground_len == 0.0) {
    visit(cy, cx, 0.0, 1.0);
    return out;
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int sx = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  const int sy = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);
  double tmx = sx > 0 ? (cx + 1 - x0) / dx : (sx < 0 ? (cx - x0) / dx : kInf);
  double tmy = sy > 0 ? (cy + 1 - y0) / dy : (sy < 0 ? (cy - y0) / dy : kInf);
  const double tdx = sx != 0 ? 1.0 / std::abs(dx) : kInf;
  const double tdy = sy != 0 ? 1.0 / std::abs(dy) : kInf;
  double t = 0.0;
  while (true) {
    const double t_next = std::min({tmx, tmy, 1.0});
    if (!visit(cy, cx, t, t_next) || t_next >= 1.0) break;
    if (tmx < tmy) {
      cx += sx;
      t = tmx;
      tmx += tdx;
    } else if (tmy < tmx) {
      cy += sy;
      t = tmy;
      tmy += tdy;
    } else {
      cx += sx;
      cy += sy;
      t = tmx;
      tmx += tdx;
      tmy += tdy;
    }
  }
  return out;
}

std::vector<WallSegment> extract_walls(const HeightMap& map) {
  const int rows = map.rows();
  const int cols = map.cols();
  const double res = map.resolution_m;
  std::vector<WallSegment> walls;

  // Height and outward normal of the face between cells p (lower) and q
  // (higher coordinate); normal 0 when there is no ground/building face.
  auto face = [&](double hp, double hq) -> std::pair<double, int> {
    if (hp > 0.0 && hq == 0.0) return {hp, +1};
    if (hp == 0.0 && hq > 0.0) return {hq, -1};
    return {0.0, 0};
  };
  auto flush = [&](bool constant_x, int line, int start, int end, std::pair<double, int> f) {
    if (f.second == 0 || end <= start) return;
    walls.push_back({constant_x, line * res, start * res, end * res, f.first, f.second});
  };

  for (int c = 1; c < cols; ++c) {
    int start = 0;
    std::pair<double, int> run{0.0, 0};
    for (int r = 0; r <= rows; ++r) {
      const auto f = r < rows ? face(map.building(r, c - 1), map.building(r, c)) : std::pair<double, int>{0.0, 0};
      if (f != run) {
        flush(true, c, start, r, run);
        run = f;
        start = r;
      }
    }
  }
  for (int r = 1; r < rows; ++r) {
    int start = 0;
    std::pair<double, int> run{0.0, 0};
    for (int c = 0; c <= cols; ++c) {
      const auto f = c < cols ? face(map.building(r - 1, c), map.building(r, c)) : std::pair<double, int>{0.0, 0};
      if (f != run) {
        flush(false, r, start, c, run);
        run = f;
        start = c;
      }
    }
  }
  return walls;
}

SceneChannels trace_paths(const HeightMap& map, const TxSite& tx, const SceneConfig& cfg, double rx_height_m) {
  cfg.validate();
  require(map.building.contains(tx.pixel), "Tx pixel outside the map");
  require(rx_height_m >= 0.0, "Rx height must be non-negative");

  SceneChannels out;
  out.rows = map.rows();
  out.cols = map.cols();
  out.rx_height_m = rx_height_m;
  out.channels.resize(map.building.size());

  const Point3 txp = tx_position(map, tx);
  const double lambda = cfg.wavelength_m();
  const std::vector<WallSegment> walls = cfg.max_reflections > 0 ? extract_walls(map) : std::vector<WallSegment>{};

  parallel_for(out.channels.size(), [&](std::size_t idx) {
    const int r = static_cast<int>(idx / static_cast<std::size_t>(out.cols));
    const int c = static_cast<int>(idx % static_cast<std::size_t>(out.cols));
    MultipathChannel& ch = out.channels[idx];
    ch.rx_pixel = {r, c};
    if (map.is_building(r, c)) return;
    const Point3 rxp = rx_position(map, r, c, rx_height_m);

    const double direct_len = distance(txp, rxp);
    if (direct_len > 0.0) {
      const SegmentTrace seg = trace_segment(map, txp, rxp);
      if (seg.visible) {
        ch.paths.push_back(
            make_path(txp, rxp, rxp, direct_len, cfg.vegetation_db_per_m * seg.vegetation_m, false, lambda));
      }
    }

    for (const WallSegment& w : walls) {
      const double tx_along = w.constant_x ? txp.x : txp.y;
      const double rx_along = w.constant_x ? rxp.x : rxp.y;
      if ((tx_along - w.coord) * w.normal <= 0.0 || (rx_along - w.coord) * w.normal <= 0.0) continue;

      Point3 image = txp;
      (w.constant_x ? image.x : image.y) = 2.0 * w.coord - tx_along;
      const double s = (w.coord - (w.constant_x ? image.x : image.y)) / (rx_along - (w.constant_x ? image.x : image.y));
      Point3 bounce{image.x + s * (rxp.x - image.x), image.y + s * (rxp.y - image.y), image.z + s * (rxp.z - image.z)};
      (w.constant_x ? bounce.x : bounce.y) = w.coord;
      const double across = w.constant_x ? bounce.y : bounce.x;
      if (across < w.lo || across > w.hi || bounce.z < 0.0 || bounce.z > w.height_m) continue;

      const SegmentTrace leg1 = trace_segment(map, txp, bounce);
      if (!leg1.visible) continue;
      const SegmentTrace leg2 = trace_segment(map, bounce, rxp);
      if (!leg2.visible) continue;
      const double len = distance(image, rxp);
      const double loss = cfg.reflection_loss_db + cfg.vegetation_db_per_m * (leg1.vegetation_m + leg2.vegetation_m);
      ch.paths.push_back(make_path(txp, bounce, rxp, len, loss, true, lambda));
    }
  });
  return out;
}

TensorMap tensorize(const SceneChannels& channels, const Codebook& codebook, const ArrayFrame& frame) {
  TensorMap out(channels.rows, channels.cols, codebook.dims());
  parallel_for(channels.channels.size(), [&](std::size_t idx) {
    const int r = static_cast<int>(idx / static_cast<std::size_t>(channels.cols));
    const int c = static_cast<int>(idx % static_cast<std::size_t>(channels.cols));
    const EffectiveChannelTensor t = effective_tensor(channels.channels[idx], codebook, frame);
    out.set(r, c, t);
    out.set_valid(r, c, t.max() > 0.0);
  });
  return out;
}

TensorMap downscale_tensor_map(const TensorMap& map, int factor) {
  require(factor >= 1, "downscale factor must be positive");
  require(map.rows() % factor == 0 && map.cols() % factor == 0, "map dimensions are not divisible by the downscale factor");
  TensorMap out(map.rows() / factor, map.cols() / factor, map.dims());
  const std::size_t n = static_cast<std::size_t>(map.dims().size());
  for (int R = 0; R < out.rows(); ++R) {
    for (int C = 0; C < out.cols(); ++C) {
      auto acc = out.tensor(R, C);
      int count = 0;
      for (int r = R * factor; r < (R + 1) * factor; ++r) {
        for (int c = C * factor; c < (C + 1) * factor; ++c) {
          if (!map.valid(r, c)) continue;
          const auto t = map.tensor(r, c);
          for (std::size_t i = 0; i < n; ++i) acc[i] += t[i];
          ++count;
        }
      }
      if (count == 0) continue;
      for (auto& v : acc) v /= count;
      out.set_valid(R, C, true);
    }
  }
  return out;
}

ConsistencyStats downscale_consistency(const TensorMap& hi, const TensorMap& lo, int k, const LinkBudget& budget) {
  require(hi.dims() == lo.dims(), "high- and low-resolution maps use different codebooks");
  require(lo.rows() > 0 && lo.cols() > 0 && hi.rows() % lo.rows() == 0 && hi.cols() % lo.cols() == 0,
          "low-resolution map does not tile the high-resolution map");
  const int factor = hi.rows() / lo.rows();
  require(hi.cols() / lo.cols() == factor, "downscale factors differ between axes");
  require(k >= 1 && k <= hi.dims().size(), "k out of range");

  std::vector<std::vector<int>> block_rank(lo.pixel_count());
  std::vector<int> truths;
  std::vector<CandidateSet> preds;
  std::vector<EffectiveChannelTensor> tensors;
  for (int r = 0; r < hi.rows(); ++r) {
    for (int c = 0; c < hi.cols(); ++c) {
      if (!hi.valid(r, c) || is_excluded(hi.tensor(r, c), budget)) continue;
      const int R = r / factor;
      const int C = c / factor;
      require(lo.valid(R, C), "valid high-resolution pixel maps to an invalid block");
      auto& rank = block_rank[lo.mask().index(R, C)];
      if (rank.empty()) rank = rank_descending(lo.tensor(R, C));
      tensors.push_back(hi.tensor_copy(r, c));
      truths.push_back(optimal_beam(tensors.back()).flat);
      preds.push_back({std::vector<int>(rank.begin(), rank.begin() + k)});
    }
  }
  ConsistencyStats stats;
  stats.samples = truths.size();
  if (truths.empty()) fail(ErrorKind::kUndefinedResult, "no valid pixel to score");
  stats.accuracy = topk_accuracy(truths, preds, k);
  stats.tpr = throughput_ratio(tensors, preds, k, budget);
  return stats;
}

}  // namespace beamgrid
