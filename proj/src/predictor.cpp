#include "beamgrid/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include "beamgrid/error.hpp"
#include "beamgrid/parallel.hpp"
#include "beamgrid/random.hpp"

namespace beamgrid {

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

enum Feature : int {
  kTxOneHot,
  kTxDistance,
  kTxBearingSin,
  kTxBearingCos,
  kBuildingHeight,
  kVegetationHeight,
  kRelativeHeight,
  kBoresightSin,
  kBoresightCos,
  kFeatureCount,
};

double clip_unit(double x) { return std::clamp(x, -1.0, 1.0); }

const BeamDistanceMatrix& distance_matrix(const BeamDims& dims) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::unique_ptr<BeamDistanceMatrix>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{dims.na, dims.ne, dims.nr}];
  if (!slot) slot = std::make_unique<BeamDistanceMatrix>(dims);
  return *slot;
}

HeadForm head_form(const LossConfig& loss) { return loss.sep ? HeadForm::kSep : HeadForm::kJoint; }

Logits output_logits(const LossConfig& loss, const BeamDims& dims, std::vector<double> out) {
  if (loss.kind == LossKind::kIR) return Logits(HeadForm::kSep, {1, 1, 1}, std::move(out));
  return Logits::with_layout(head_form(loss), dims, std::move(out));
}

}  // namespace

FeatureMaps::FeatureMaps(int rows, int cols, int features)
    : rows_(rows),
      cols_(cols),
      features_(features),
      values_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * static_cast<std::size_t>(features),
              0.0) {
  require(rows >= 0 && cols >= 0 && features >= 1, "invalid feature map shape");
}

const std::vector<std::string>& FeatureMaps::names() {
  static const std::vector<std::string> kNames{
      "tx_onehot",         "tx_distance",     "tx_bearing_sin", "tx_bearing_cos", "building_height",
      "vegetation_height", "relative_height", "boresight_sin",  "boresight_cos",
  };
  return kNames;
}

std::span<const double> FeatureMaps::pixel(int r, int c) const {
  const std::size_t f = static_cast<std::size_t>(features_);
  return std::span<const double>(values_).subspan((static_cast<std::size_t>(r) * cols_ + c) * f, f);
}

std::span<double> FeatureMaps::pixel(int r, int c) {
  const std::size_t f = static_cast<std::size_t>(features_);
  return std::span<double>(values_).subspan((static_cast<std::size_t>(r) * cols_ + c) * f, f);
}

FeatureMaps build_features(const HeightMap& map, const TxSite& tx) {
  require(map.building.contains(tx.pixel), "Tx pixel outside the map");
  FeatureMaps out(map.rows(), map.cols(), kFeatureCount);
  const double res = map.resolution_m;
  const double diagonal = std::hypot(map.rows(), map.cols()) * res;
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      auto f = out.pixel(r, c);
      const double east = (c - tx.pixel.col) * res;
      const double north = (tx.pixel.row - r) * res;
      const double dist = std::hypot(east, north);
      f[kTxOneHot] = (r == tx.pixel.row && c == tx.pixel.col) ? 1.0 : 0.0;
      f[kTxDistance] = dist / diagonal;
      if (dist > 0.0) {
        const double az = std::atan2(north, east);
        f[kTxBearingSin] = std::sin(az);
        f[kTxBearingCos] = std::cos(az);
        f[kBoresightSin] = std::sin(az - tx.frame.boresight_azimuth);
        f[kBoresightCos] = std::cos(az - tx.frame.boresight_azimuth);
      }
      f[kBuildingHeight] = clip_unit(map.building(r, c) / kHeightScaleM);
      f[kVegetationHeight] = clip_unit(map.vegetation(r, c) / kHeightScaleM);
      f[kRelativeHeight] = clip_unit((tx.height_m - map.building(r, c)) / kHeightScaleM);
    }
  }
  return out;
}

FeatureMaps downscale_features(const FeatureMaps& features, int factor) {
  require(factor >= 1, "downscale factor must be positive");
  require(features.rows() % factor == 0 && features.cols() % factor == 0,
          "feature map dimensions are not divisible by the downscale factor");
  FeatureMaps out(features.rows() / factor, features.cols() / factor, features.features());
  const double inv = 1.0 / (factor * factor);
  for (int R = 0; R < out.rows(); ++R) {
    for (int C = 0; C < out.cols(); ++C) {
      auto acc = out.pixel(R, C);
      for (int r = R * factor; r < (R + 1) * factor; ++r) {
        for (int c = C * factor; c < (C + 1) * factor; ++c) {
          const auto f = features.pixel(r, c);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
        }
      }
      for (auto& v : acc) v *= inv;
    }
  }
  return out;
}

int prediction_width(PredictionForm form, const BeamDims& dims) {
  switch (form) {
    case PredictionForm::kJoint: return dims.size();
    case PredictionForm::kSep: return dims.heads();
    case PredictionForm::kIndexTriple: return 3;
  }
  return 0;
}

PredictionMap::PredictionMap(int rows, int cols, BeamDims dims, PredictionForm form)
    : dims_(dims),
      form_(form),
      mask_(rows, cols, 0),
      values_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
                  static_cast<std::size_t>(prediction_width(form, dims)),
              0.0) {}

int PredictionMap::width() const noexcept { return prediction_width(form_, dims_); }

std::span<const double> PredictionMap::scores(int r, int c) const {
  const std::size_t w = static_cast<std::size_t>(width());
  return std::span<const double>(values_).subspan(mask_.index(r, c) * w, w);
}

void PredictionMap::set(int r, int c, std::span<const double> scores) {
  const std::size_t w = static_cast<std::size_t>(width());
  require(scores.size() == w, "prediction width mismatch");
  std::ranges::copy(scores, values_.begin() + static_cast<std::ptrdiff_t>(mask_.index(r, c) * w));
  mask_(r, c) = 1;
}

std::vector<int> rank_beams(std::span<const double> scores, PredictionForm form, const BeamDims& dims) {
  require(static_cast<int>(scores.size()) == prediction_width(form, dims), "score width does not match the form");
  switch (form) {
    case PredictionForm::kJoint: return rank_descending(scores);
    case PredictionForm::kIndexTriple: return ir_ranking(scores, dims);
    case PredictionForm::kSep: {
      const auto la = log_softmax(scores.subspan(0, static_cast<std::size_t>(dims.na)));
      const auto le = log_softmax(scores.subspan(static_cast<std::size_t>(dims.na), static_cast<std::size_t>(dims.ne)));
      const auto lr = log_softmax(scores.subspan(static_cast<std::size_t>(dims.na + dims.ne), static_cast<std::size_t>(dims.nr)));
      std::vector<double> joint(static_cast<std::size_t>(dims.size()));
      for (int f = 0; f < dims.size(); ++f) {
        const BeamIndex b = dims.unflat(f);
        joint[static_cast<std::size_t>(f)] = la[b.ia] + le[b.ie] + lr[b.ir];
      }
      return rank_descending(joint);
    }
  }
  return {};
}

PredictionMap oracle_predictor(const TensorMap& tensors) {
  PredictionMap out(tensors.rows(), tensors.cols(), tensors.dims(), PredictionForm::kJoint);
  std::vector<double> logits(static_cast<std::size_t>(tensors.dims().size()));
  for (int r = 0; r < tensors.rows(); ++r) {
    for (int c = 0; c < tensors.cols(); ++c) {
      if (!tensors.valid(r, c)) continue;
      const auto t = tensors.tensor(r, c);
      for (std::size_t i = 0; i < t.size(); ++i) logits[i] = 10.0 * std::log10(t[i] + kTiny);
      out.set(r, c, logits);
    }
  }
  return out;
}

PredictionMap geometric_predictor(const HeightMap& map, const TxSite& tx, const Codebook& codebook,
                                  double rx_height_m, int factor) {
  require(factor >= 1 && map.rows() % factor == 0 && map.cols() % factor == 0,
          "map dimensions are not divisible by the downscale factor");
  const BeamDims& dims = codebook.dims();
  PredictionMap out(map.rows() / factor, map.cols() / factor, dims, PredictionForm::kJoint);
  const Point3 txp = tx_position(map, tx);
  const double res = map.resolution_m;
  const std::size_t pixels = out.mask().size();
  std::vector<std::vector<double>> rows_scores(pixels);
  parallel_for(pixels, [&](std::size_t idx) {
    const int R = static_cast<int>(idx / static_cast<std::size_t>(out.cols()));
    const int C = static_cast<int>(idx % static_cast<std::size_t>(out.cols()));
    const Point3 rxp{(C + 0.5) * factor * res, (R + 0.5) * factor * res, rx_height_m};
    PathParams p;
    p.aod_azimuth = std::atan2(-(rxp.y - txp.y), rxp.x - txp.x);
    p.aod_elevation = std::atan2(rxp.z - txp.z, std::hypot(rxp.x - txp.x, rxp.y - txp.y));
    p.aoa_azimuth = std::atan2(-(txp.y - rxp.y), txp.x - rxp.x);
    const BeamspaceAngles bs = departure_beamspace(p, tx.frame);
    const CVector a_az = steering_vector(static_cast<int>(codebook.azimuth(0).size()), bs.varphi);
    const CVector a_el = steering_vector(static_cast<int>(codebook.elevation(0).size()), bs.vartheta);
    const int sector = sector_index(p.aoa_azimuth, dims.nr);
    std::vector<double>& s = rows_scores[idx];
    s.resize(static_cast<std::size_t>(dims.size()));
    for (int ia = 0; ia < dims.na; ++ia) {
      const double ga = std::norm(inner(codebook.azimuth(ia), a_az));
      for (int ie = 0; ie < dims.ne; ++ie) {
        const double ge = std::norm(inner(codebook.elevation(ie), a_el));
        for (int ir = 0; ir < dims.nr; ++ir) {
          const double score = ir == sector ? ga * ge : 0.0;
          s[static_cast<std::size_t>(dims.flat({ia, ie, ir}))] = std::log(score + kTiny);
        }
      }
    }
  });
  for (std::size_t idx = 0; idx < pixels; ++idx) {
    out.set(static_cast<int>(idx / static_cast<std::size_t>(out.cols())),
            static_cast<int>(idx % static_cast<std::size_t>(out.cols())), rows_scores[idx]);
  }
  return out;
}

std::vector<CandidateSet> candidates(const PredictionMap& pred, int k) {
  require(k >= 1 && k <= pred.dims().size(), "k must lie in [1, codebook size]");
  std::vector<CandidateSet> out(pred.mask().size());
  parallel_for(out.size(), [&](std::size_t idx) {
    const int r = static_cast<int>(idx / static_cast<std::size_t>(pred.cols()));
    const int c = static_cast<int>(idx % static_cast<std::size_t>(pred.cols()));
    if (!pred.has(r, c)) return;
    std::vector<int> ranked = rank_beams(pred.scores(r, c), pred.form(), pred.dims());
    ranked.resize(static_cast<std::size_t>(k));
    out[idx].beams = std::move(ranked);
  });
  return out;
}

SoftmaxModel::SoftmaxModel(const LossConfig& loss, const BeamDims& dims, int features, std::uint64_t seed)
    : loss_(loss), dims_(dims), features_(features), seed_(seed) {
  require(features >= 1, "model needs at least one feature");
  require(dims.size() >= 1, "empty codebook");
  if (loss.kind == LossKind::kIR && !loss.sep) {
    fail(ErrorKind::kUnsupportedForm, "index regression needs separate heads");
  }
  outputs_ = loss.kind == LossKind::kIR ? 3 : (loss.sep ? dims.heads() : dims.size());
  weights_.assign(static_cast<std::size_t>(features_) * static_cast<std::size_t>(outputs_), 0.0);
  bias_.assign(static_cast<std::size_t>(outputs_), 0.0);
}

PredictionForm SoftmaxModel::prediction_form() const noexcept {
  if (loss_.kind == LossKind::kIR) return PredictionForm::kIndexTriple;
  return loss_.sep ? PredictionForm::kSep : PredictionForm::kJoint;
}

void SoftmaxModel::forward(std::span<const double> x, std::span<double> out) const {
  require(static_cast<int>(x.size()) == features_, "feature dimension does not match the model");
  std::ranges::copy(bias_, out.begin());
  for (int f = 0; f < features_; ++f) {
    const double xf = x[static_cast<std::size_t>(f)];
    if (xf == 0.0) continue;
    const double* w = weights_.data() + static_cast<std::size_t>(f) * outputs_;
    for (int o = 0; o < outputs_; ++o) out[static_cast<std::size_t>(o)] += w[o] * xf;
  }
}

Logits SoftmaxModel::logits(std::span<const double> x) const {
  std::vector<double> out(static_cast<std::size_t>(outputs_));
  forward(x, out);
  return output_logits(loss_, dims_, std::move(out));
}

void TrainingSet::add_scene(const FeatureMaps& features, const TensorMap& tensors, const LinkBudget& budget) {
  require(features.rows() == tensors.rows() && features.cols() == tensors.cols(),
          "feature and tensor maps differ in shape");
  if (samples.empty()) dims = tensors.dims();
  require(dims == tensors.dims(), "scenes use different codebooks");
  for (int r = 0; r < tensors.rows(); ++r) {
    for (int c = 0; c < tensors.cols(); ++c) {
      if (!tensors.valid(r, c) || is_excluded(tensors.tensor(r, c), budget)) continue;
      TrainingSample s;
      const auto f = features.pixel(r, c);
      s.features.assign(f.begin(), f.end());
      s.tensor = tensors.tensor_copy(r, c);
      s.optimal = optimal_beam(s.tensor).index;
      samples.push_back(std::move(s));
    }
  }
}

LossResult sample_loss(const SoftmaxModel& model, const TrainingSample& sample) {
  const Logits z = model.logits(sample.features);
  const LossConfig& loss = model.loss();
  switch (loss.kind) {
    case LossKind::kCE: return ce_loss(z, sample.optimal, model.dims());
    case LossKind::kCEP: return cep_loss(z, cep_target(sample.tensor, loss.floor_db, z.form()));
    case LossKind::kWS: {
      if (loss.sep) return ws_loss_sep(z, sample.optimal, loss.epsilon_scale);
      const BeamDistanceMatrix& d = distance_matrix(model.dims());
      return ws_loss(z, model.dims().flat(sample.optimal), d, loss.epsilon_scale * d.max());
    }
    case LossKind::kIR: return ir_loss(z, sample.optimal);
    case LossKind::kGR: return gr_loss(z, sample.tensor, loss.floor_db);
  }
  fail(ErrorKind::kInvalidArgument, "unknown loss kind");
}

void TrainHyper::validate() const {
  require(lr >= 0.0, "learning rate must be non-negative");
  require(epochs >= 1 && batch >= 1 && patience >= 1 && stop_patience >= 1, "training schedule must be positive");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
}

double mean_loss(const SoftmaxModel& model, const TrainingSet& set) {
  require(!set.empty(), "mean loss of an empty set");
  std::vector<double> losses(set.samples.size());
  parallel_for(losses.size(), [&](std::size_t i) { losses[i] = sample_loss(model, set.samples[i]).loss; });
  const double total = std::accumulate(losses.begin(), losses.end(), 0.0);
  return total / static_cast<double>(losses.size());
}

TrainResult train(const SoftmaxModel& initial, const TrainingSet& train_set, const TrainingSet& val_set,
                  const TrainHyper& hyper) {
  hyper.validate();
  if (train_set.empty()) fail(ErrorKind::kEmptyTrainingSet, "no valid pixel to train on");
  require(train_set.dims == initial.dims(), "training set and model use different codebooks");

  SoftmaxModel model = initial;
  const int F = model.features();
  const int O = model.outputs();
  std::vector<double> velocity_w(model.weights().size(), 0.0);
  std::vector<double> velocity_b(model.bias().size(), 0.0);
  std::vector<double> grad_w(model.weights().size());
  std::vector<double> grad_b(model.bias().size());

  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hyper.seed);

  TrainResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  double lr = hyper.lr;
  int since_best = 0;
  int since_decay = 0;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    const double epoch_lr = lr;
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
      std::ranges::fill(grad_w, 0.0);
      std::ranges::fill(grad_b, 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const TrainingSample& s = train_set.samples[order[i]];
        const LossResult lr_out = sample_loss(model, s);
        for (int f = 0; f < F; ++f) {
          const double xf = s.features[static_cast<std::size_t>(f)];
          if (xf == 0.0) continue;
          double* g = grad_w.data() + static_cast<std::size_t>(f) * O;
          for (int o = 0; o < O; ++o) g[o] += xf * lr_out.grad[static_cast<std::size_t>(o)];
        }
        for (int o = 0; o < O; ++o) grad_b[static_cast<std::size_t>(o)] += lr_out.grad[static_cast<std::size_t>(o)];
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = 0; i < grad_w.size(); ++i) {
        velocity_w[i] = hyper.momentum * velocity_w[i] - epoch_lr * scale * grad_w[i];
        model.weights()[i] += velocity_w[i];
      }
      for (std::size_t i = 0; i < grad_b.size(); ++i) {
        velocity_b[i] = hyper.momentum * velocity_b[i] - epoch_lr * scale * grad_b[i];
        model.bias()[i] += velocity_b[i];
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = epoch_lr;
    rec.train_loss = mean_loss(model, train_set);
    rec.val_loss = val_set.empty() ? rec.train_loss : mean_loss(model, val_set);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      fail(ErrorKind::kUndefinedResult, "training diverged at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);

    if (rec.val_loss < best) {
      best = rec.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      if (++since_decay >= hyper.patience) {
        lr *= hyper.lr_decay;
        since_decay = 0;
      }
    }
    if (since_best >= hyper.stop_patience) break;
  }
  return result;
}

PredictionMap predict(const SoftmaxModel& model, const FeatureMaps& features, const Grid<std::uint8_t>& mask) {
  require(features.features() == model.features(), "feature dimension does not match the model");
  require(mask.rows() == features.rows() && mask.cols() == features.cols(), "mask and feature map differ in shape");
  PredictionMap out(features.rows(), features.cols(), model.dims(), model.prediction_form());
  std::vector<double> buf(static_cast<std::size_t>(model.outputs()));
  for (int r = 0; r < features.rows(); ++r) {
    for (int c = 0; c < features.cols(); ++c) {
      if (mask(r, c) == 0) continue;
      model.forward(features.pixel(r, c), buf);
      out.set(r, c, buf);
    }
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

SceneSplit split_scenes(std::vector<std::string> names, std::uint64_t seed) {
  std::ranges::sort(names);
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    fail(ErrorKind::kInvalidArgument, "duplicate scene name");
  }
  if (names.size() < 3) {
    fail(ErrorKind::kInsufficientData, "need at least 3 scenes, got " + std::to_string(names.size()));
  }
  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  for (auto& n : names) keyed.emplace_back(splitmix64(seed ^ fnv1a(n)), n);
  std::ranges::sort(keyed);
  const std::size_t n = keyed.size();
  const std::size_t part = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n))));
  const std::size_t n_train = n - 2 * part;
  SceneSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + part ? out.validation : out.test);
    dst.push_back(keyed[i].second);
  }
  return out;
}

}  // namespace beamgrid
