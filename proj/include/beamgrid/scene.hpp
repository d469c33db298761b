#pragma once

#include <cstdint>
#include <vector>

#include "beamgrid/channel.hpp"
#include "beamgrid/grid.hpp"
#include "beamgrid/tensor_map.hpp"

namespace beamgrid {

// Building and vegetation nDSMs (object height above ground per pixel).
// Row 0 is the northern edge; columns increase eastward.
struct HeightMap {
  double resolution_m = 1.0;
  Grid<double> building;
  Grid<double> vegetation;

  HeightMap() = default;
  HeightMap(int rows, int cols, double resolution = 1.0)
      : resolution_m(resolution), building(rows, cols, 0.0), vegetation(rows, cols, 0.0) {}

  int rows() const noexcept { return building.rows(); }
  int cols() const noexcept { return building.cols(); }
  bool is_building(int r, int c) const { return building(r, c) > 0.0; }

  friend bool operator==(const HeightMap&, const HeightMap&) = default;
};

struct CityStyle {
  double building_fraction = 0.3;
  double vegetation_fraction = 0.05;
  int block_pitch = 16;  // street lattice period, pixels
  int street_width = 4;
  int min_building = 3;  // rectangle side range, pixels
  int max_building = 10;
  double min_height_m = 6.0;
  double max_height_m = 30.0;
  double min_tree_radius = 1.5;
  double max_tree_radius = 3.5;
  double min_tree_height_m = 4.0;
  double max_tree_height_m = 12.0;
};

HeightMap generate_city(int rows, int cols, std::uint64_t seed, const CityStyle& style = {});

struct TxSite {
  Pixel pixel;
  double height_m = 0.0;
  ArrayFrame frame;
};

// Building pixel with at least one in-map 4-neighbour at ground level.
bool is_edge_pixel(const HeightMap& map, int r, int c);

// Uniformly samples a rooftop-edge pixel. The array faces the first street
// neighbour in the order north, west, east, south with a 45 degree downtilt.
TxSite place_tx(const HeightMap& map, std::uint64_t seed, double mast_m);

struct SceneConfig {
  double carrier_hz = 3.9e9;
  double reflection_loss_db = 6.0;
  double vegetation_db_per_m = 0.5;
  int max_reflections = 1;  // 0 or 1
  double tx_mast_m = 3.0;
  std::uint64_t seed = 1;

  double wavelength_m() const;
  void validate() const;
};

struct SceneChannels {
  int rows = 0;
  int cols = 0;
  double rx_height_m = 1.5;
  std::vector<MultipathChannel> channels;  // row-major, one per pixel

  const MultipathChannel& at(int r, int c) const {
    return channels[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }

  friend bool operator==(const SceneChannels&, const SceneChannels&) = default;
};

// Point in scene metres: x east from the western edge, y south from the
// northern edge, z up from the ground.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// The array sits on the roof edge of its pixel, where the boresight leaves it.
Point3 tx_position(const HeightMap& map, const TxSite& tx);
Point3 rx_position(const HeightMap& map, int r, int c, double rx_height_m);

struct SegmentTrace {
  bool visible = true;
  double vegetation_m = 0.0;  // segment length below the canopy
};

// Marches the segment's ground projection across the grid; the segment is
// blocked where its height on a crossed cell drops below the building height.
SegmentTrace trace_segment(const HeightMap& map, const Point3& a, const Point3& b);

// Vertical wall face between a building pixel run and the adjacent ground
// pixels, expressed on a grid line.
struct WallSegment {
  bool constant_x = true;  // wall plane x = coord (else y = coord)
  double coord = 0.0;      // metres
  double lo = 0.0;         // extent along the other horizontal axis, metres
  double hi = 0.0;
  double height_m = 0.0;
  int normal = 1;  // outward direction along the constant axis (+1 / -1)
};

std::vector<WallSegment> extract_walls(const HeightMap& map);

// Direct path plus first-order specular wall reflections for every ground
// pixel; building pixels get an empty channel.
SceneChannels trace_paths(const HeightMap& map, const TxSite& tx, const SceneConfig& cfg, double rx_height_m = 1.5);

// Effective tensors for every pixel; a pixel is valid when its tensor is
// non-zero.
TensorMap tensorize(const SceneChannels& channels, const Codebook& codebook, const ArrayFrame& frame);

// Mean of the valid tensors in each factor x factor block; blocks without a
// valid pixel are invalid.
TensorMap downscale_tensor_map(const TensorMap& map, int factor = 4);

struct LinkBudget;

struct ConsistencyStats {
  double accuracy = 0.0;
  double tpr = 0.0;
  std::size_t samples = 0;
};

// Scores the low-resolution beam ranking as the prediction for every valid
// high-resolution pixel of its block.
ConsistencyStats downscale_consistency(const TensorMap& hi, const TensorMap& lo, int k, const LinkBudget& budget);

}  // namespace beamgrid
