#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "beamgrid/channel.hpp"
#include "beamgrid/grid.hpp"
#include "beamgrid/losses.hpp"
#include "beamgrid/metrics.hpp"
#include "beamgrid/scene.hpp"
#include "beamgrid/tensor_map.hpp"

namespace beamgrid {

inline constexpr int kFeatureSchemaVersion = 1;

// Per-pixel input encoding of the environment and the Tx.
class FeatureMaps {
 public:
  FeatureMaps() = default;
  FeatureMaps(int rows, int cols, int features);

  static const std::vector<std::string>& names();

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int features() const noexcept { return features_; }
  std::span<const double> pixel(int r, int c) const;
  std::span<double> pixel(int r, int c);
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const FeatureMaps&, const FeatureMaps&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int features_ = 0;
  std::vector<double> values_;
};

// Heights are normalized by this scale and clipped to [-1, 1].
inline constexpr double kHeightScaleM = 50.0;

FeatureMaps build_features(const HeightMap& map, const TxSite& tx);

// Block mean of the features, matching downscale_tensor_map.
FeatureMaps downscale_features(const FeatureMaps& features, int factor);

enum class PredictionForm { kJoint, kSep, kIndexTriple };

// Per-pixel model outputs; only pixels with mask = 1 carry a prediction.
class PredictionMap {
 public:
  PredictionMap() = default;
  PredictionMap(int rows, int cols, BeamDims dims, PredictionForm form);

  int rows() const noexcept { return mask_.rows(); }
  int cols() const noexcept { return mask_.cols(); }
  const BeamDims& dims() const noexcept { return dims_; }
  PredictionForm form() const noexcept { return form_; }
  int width() const noexcept;

  bool has(int r, int c) const { return mask_(r, c) != 0; }
  std::span<const double> scores(int r, int c) const;
  void set(int r, int c, std::span<const double> scores);
  const Grid<std::uint8_t>& mask() const noexcept { return mask_; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  BeamDims dims_;
  PredictionForm form_ = PredictionForm::kJoint;
  Grid<std::uint8_t> mask_;
  std::vector<double> values_;
};

int prediction_width(PredictionForm form, const BeamDims& dims);

// Full beam ranking for one pixel's scores.
std::vector<int> rank_beams(std::span<const double> scores, PredictionForm form, const BeamDims& dims);

// Logits 10 log10(power + tiny) for every valid pixel.
PredictionMap oracle_predictor(const TensorMap& tensors);

// Direct-path beam scores ignoring blockage. `factor` > 1 evaluates at the
// centres of factor x factor blocks so the map lines up with a downscaled
// tensor map.
PredictionMap geometric_predictor(const HeightMap& map, const TxSite& tx, const Codebook& codebook,
                                  double rx_height_m = 1.5, int factor = 1);

// Top-k per pixel (row-major); pixels without a prediction get an empty set.
std::vector<CandidateSet> candidates(const PredictionMap& pred, int k);

struct LossConfig {
  LossKind kind = LossKind::kCE;
  bool sep = false;
  double epsilon_scale = kDefaultEpsilonScale;  // WS
  double floor_db = -30.0;                      // CEP, GR

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Per-pixel linear layer: outputs = W^T x + b.
class SoftmaxModel {
 public:
  SoftmaxModel() = default;
  SoftmaxModel(const LossConfig& loss, const BeamDims& dims, int features, std::uint64_t seed);

  const LossConfig& loss() const noexcept { return loss_; }
  const BeamDims& dims() const noexcept { return dims_; }
  int features() const noexcept { return features_; }
  int outputs() const noexcept { return outputs_; }
  std::uint64_t seed() const noexcept { return seed_; }
  PredictionForm prediction_form() const noexcept;

  std::vector<double>& weights() noexcept { return weights_; }  // features x outputs, row-major
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  void forward(std::span<const double> x, std::span<double> out) const;
  Logits logits(std::span<const double> x) const;

  friend bool operator==(const SoftmaxModel&, const SoftmaxModel&) = default;

 private:
  LossConfig loss_;
  BeamDims dims_;
  int features_ = 0;
  int outputs_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

struct TrainingSample {
  std::vector<double> features;
  EffectiveChannelTensor tensor;
  BeamIndex optimal;
};

struct TrainingSet {
  BeamDims dims;
  std::vector<TrainingSample> samples;

  // Adds every valid, non-excluded pixel of a scene.
  void add_scene(const FeatureMaps& features, const TensorMap& tensors, const LinkBudget& budget);
  bool empty() const noexcept { return samples.empty(); }
};

LossResult sample_loss(const SoftmaxModel& model, const TrainingSample& sample);

struct TrainHyper {
  double lr = 0.1;
  int epochs = 40;
  int batch = 64;
  double lr_decay = 0.5;
  int patience = 3;       // epochs without validation improvement before decaying
  int stop_patience = 8;  // epochs without improvement before stopping
  double momentum = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  SoftmaxModel model;  // best validation state
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Mean loss over a set, summed in sample order.
double mean_loss(const SoftmaxModel& model, const TrainingSet& set);

// Mini-batch SGD with seeded shuffling. The learning rate is multiplied by
// lr_decay after `patience` epochs without validation improvement; the best
// validation state is returned. An empty validation set selects on the
// training loss.
TrainResult train(const SoftmaxModel& initial, const TrainingSet& train_set, const TrainingSet& val_set,
                  const TrainHyper& hyper);

PredictionMap predict(const SoftmaxModel& model, const FeatureMaps& features, const Grid<std::uint8_t>& mask);

struct SceneSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// 80/10/10 split of whole scenes, ordered by a seeded hash of the scene name.
// Needs at least 3 scenes so every part is populated.
SceneSplit split_scenes(std::vector<std::string> names, std::uint64_t seed);

}  // namespace beamgrid
