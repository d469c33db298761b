#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "beamgrid/codebook.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/predictor.hpp"
#include "beamgrid/scene.hpp"
#include "beamgrid/tensor_map.hpp"

namespace beamgrid {

namespace fs = std::filesystem;

enum class DType { kF32, kU8 };

const char* to_string(DType dtype);
std::size_t dtype_size(DType dtype);

// Header line "BGRD1 rows cols channels dtype\n", then a little-endian,
// row-major, channel-minor payload. Exactly one of f32/u8 is populated.
struct GridFile {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  DType dtype = DType::kF32;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  static GridFile make_f32(int rows, int cols, int channels);
  static GridFile make_u8(int rows, int cols, int channels);

  std::size_t element_count() const noexcept {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * static_cast<std::size_t>(channels);
  }
  float f(int r, int c, int ch) const { return f32[index(r, c, ch)]; }
  std::uint8_t u(int r, int c, int ch) const { return u8[index(r, c, ch)]; }
  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(ch);
  }

  friend bool operator==(const GridFile&, const GridFile&) = default;
};

std::string encode_grid(const GridFile& grid);
// `source` names the input in error messages; errors carry the byte offset.
GridFile decode_grid(std::string_view bytes, const std::string& source = "<memory>");
void write_grid(const fs::path& path, const GridFile& grid);
GridFile read_grid(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);

// Channel 0 building height, channel 1 vegetation height.
GridFile height_map_to_grid(const HeightMap& map);
HeightMap height_map_from_grid(const GridFile& grid, double resolution_m = 1.0);

std::string tx_to_json(const TxSite& tx);
TxSite tx_from_json(std::string_view text);

// CSV "pixel_row,pixel_col,c,psi,aod_az,aod_el,aoa_az" preceded by a comment
// line "# rows=R cols=C rx_height_m=H" carrying the grid shape.
std::string encode_paths(const SceneChannels& channels);
SceneChannels decode_paths(std::string_view text, const std::string& source = "<memory>");

// Tensor grid (f32, one channel per beam), flat optimal index (f32) and the
// scored mask (u8, 1 = valid and not excluded).
struct TensorFiles {
  GridFile tensor;
  GridFile index;
  GridFile mask;
};

TensorFiles tensor_map_to_files(const TensorMap& map, const LinkBudget& budget);
TensorMap tensor_map_from_files(const GridFile& tensor, const GridFile& mask, const BeamDims& dims);
void write_tensor_dir(const fs::path& dir, const TensorFiles& files);
TensorMap read_tensor_dir(const fs::path& dir, const BeamDims& dims);

// Pixels without a prediction hold NaN in every channel.
GridFile prediction_to_grid(const PredictionMap& pred);
PredictionMap prediction_from_grid(const GridFile& grid, const BeamDims& dims);

struct RunConfig {
  SceneConfig scene;
  double rx_height_m = 1.5;
  double resolution_m = 1.0;
  double building_fraction = 0.3;
  BeamDims dims;
  std::string codebook_weights;  // optional JSON file of custom Tx weights
  LinkBudget budget;
  LossConfig loss;
  TrainHyper train;
  std::vector<int> k_list{1, 2, 4, 8, 16, 32};

  void validate() const;
};

// Missing keys take defaults; unknown keys are a parse error.
RunConfig parse_config(std::string_view text, const std::string& source = "<memory>");
RunConfig load_config(const fs::path& path);
std::string config_to_json(const RunConfig& cfg);

// DFT codebook, or the custom weights named by the config. Relative weight
// paths resolve against `base`.
Codebook make_codebook(const RunConfig& cfg, const fs::path& base = {});
// {"azimuth": [[[re, im], ...], ...], "elevation": [...]}
Codebook codebook_from_json(std::string_view text, int nr);

// A compact JSON header line followed by a grid file holding the weights
// (features rows) and the bias (last row), f32, one channel per output.
// Weights are stored at f32 precision.
std::string encode_model(const SoftmaxModel& model);
SoftmaxModel decode_model(std::string_view bytes, const std::string& source = "<memory>");
void write_model(const fs::path& path, const SoftmaxModel& model);
SoftmaxModel read_model(const fs::path& path);
// The model as it reads back from disk.
SoftmaxModel round_to_f32(const SoftmaxModel& model);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
// Aligned text table: one row per metric, one column per k.
std::string report_table(const EvalReport& report);

std::string history_to_csv(const std::vector<EpochRecord>& history);

// Binary portable graymap.
std::string encode_pgm(const Grid<std::uint8_t>& image);
void write_pgm(const fs::path& path, const Grid<std::uint8_t>& image);

// 255 hit, 0 miss, 128 not scored.
Grid<std::uint8_t> hit_image(const Grid<HitState>& hits);
// 255 LoS dominant, 160 LoS attenuated, 0 NLoS.
Grid<std::uint8_t> los_image(const Grid<LosClass>& classes);

}  // namespace beamgrid
