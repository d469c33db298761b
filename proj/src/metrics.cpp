#include "beamgrid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "beamgrid/error.hpp"

namespace beamgrid {

namespace {

double rate(double rss, const LinkBudget& budget) { return std::log2(1.0 + snr(rss, budget)); }

void check_k(std::span<const CandidateSet> preds, int k) {
  require(k >= 1, "k must be positive");
  for (const auto& p : preds) require(static_cast<int>(p.size()) >= k, "candidate set shorter than k");
}

bool scored(const TensorMap& truth, int r, int c, const LinkBudget& budget) {
  return truth.valid(r, c) && !is_excluded(truth.tensor(r, c), budget);
}

}  // namespace

void LinkBudget::validate() const { require(bandwidth_hz > 0.0, "bandwidth must be positive"); }

bool CandidateSet::contains_within(int beam, int k) const {
  const auto end = beams.begin() + std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(beams.size()));
  return std::find(beams.begin(), end, beam) != end;
}

double noise_power_dbm(const LinkBudget& budget) {
  budget.validate();
  return budget.noise_psd_dbm_hz + 10.0 * std::log10(budget.bandwidth_hz) + budget.noise_figure_db;
}

bool is_excluded(std::span<const double> tensor, const LinkBudget& budget) {
  const double best = tensor.empty() ? 0.0 : *std::max_element(tensor.begin(), tensor.end());
  if (!(best > 0.0)) return true;
  return 10.0 * std::log10(best) < budget.exclusion_threshold_db;
}

Grid<std::uint8_t> exclusion_mask(const TensorMap& tensors, const LinkBudget& budget) {
  Grid<std::uint8_t> mask(tensors.rows(), tensors.cols(), 1);
  for (int r = 0; r < tensors.rows(); ++r) {
    for (int c = 0; c < tensors.cols(); ++c) mask(r, c) = scored(tensors, r, c, budget) ? 0 : 1;
  }
  return mask;
}

double snr(double rss_linear, const LinkBudget& budget) {
  require(rss_linear >= 0.0, "RSS must be non-negative");
  if (rss_linear == 0.0) return 0.0;
  return std::pow(10.0, (budget.tx_power_dbm + 10.0 * std::log10(rss_linear) - noise_power_dbm(budget)) / 10.0);
}

double topk_accuracy(std::span<const int> truths, std::span<const CandidateSet> preds, int k) {
  require(truths.size() == preds.size(), "truths and predictions differ in length");
  require(!truths.empty(), "no samples to score");
  check_k(preds, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) hits += preds[i].contains_within(truths[i], k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

double throughput_ratio(std::span<const EffectiveChannelTensor> tensors, std::span<const CandidateSet> preds, int k,
                        const LinkBudget& budget) {
  require(tensors.size() == preds.size(), "tensors and predictions differ in length");
  check_k(preds, k);
  double achieved = 0.0;
  double optimal = 0.0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    double best = 0.0;
    for (int j = 0; j < k; ++j) {
      const int beam = preds[i].beams[static_cast<std::size_t>(j)];
      require(beam >= 0 && beam < t.dims().size(), "candidate beam outside the codebook");
      best = std::max(best, rate(t[beam], budget));
    }
    achieved += best;
    optimal += rate(t.max(), budget);
  }
  if (!(optimal > 0.0)) fail(ErrorKind::kUndefinedResult, "throughput ratio has no scored sample");
  return achieved / optimal;
}

EvalReport evaluate(const TensorMap& truth, std::span<const CandidateSet> preds, std::span<const int> k_list,
                    const LinkBudget& budget) {
  require(preds.size() == truth.pixel_count(), "prediction map and tensor map differ in size");
  std::vector<int> truths;
  std::vector<EffectiveChannelTensor> tensors;
  std::vector<CandidateSet> kept;
  for (int r = 0; r < truth.rows(); ++r) {
    for (int c = 0; c < truth.cols(); ++c) {
      if (!scored(truth, r, c, budget)) continue;
      tensors.push_back(truth.tensor_copy(r, c));
      truths.push_back(optimal_beam(tensors.back()).flat);
      kept.push_back(preds[truth.mask().index(r, c)]);
    }
  }
  if (truths.empty()) fail(ErrorKind::kUndefinedResult, "every pixel is excluded");

  EvalReport report;
  report.samples = truths.size();
  report.excluded = truth.pixel_count() - truths.size();
  for (int k : k_list) {
    require(k >= 1 && k <= truth.dims().size(), "k out of range for the codebook");
    report.k.push_back(k);
    report.accuracy.push_back(topk_accuracy(truths, kept, k));
    report.tpr.push_back(throughput_ratio(tensors, kept, k, budget));
  }
  return report;
}

Grid<HitState> hit_map(const TensorMap& truth, std::span<const CandidateSet> preds, int k, const LinkBudget& budget) {
  require(preds.size() == truth.pixel_count(), "prediction map and tensor map differ in size");
  Grid<HitState> out(truth.rows(), truth.cols(), HitState::kNotScored);
  for (int r = 0; r < truth.rows(); ++r) {
    for (int c = 0; c < truth.cols(); ++c) {
      if (!scored(truth, r, c, budget)) continue;
      const int best = optimal_beam(truth.tensor_copy(r, c)).flat;
      out(r, c) = preds[truth.mask().index(r, c)].contains_within(best, k) ? HitState::kHit : HitState::kMiss;
    }
  }
  return out;
}

Grid<LosClass> los_class_map(const HeightMap& map, const TxSite& tx, const SceneChannels& channels) {
  require(channels.rows == map.rows() && channels.cols == map.cols(), "channels were not traced on this map");
  constexpr double kAngleTolerance = 1e-9;
  Grid<LosClass> out(map.rows(), map.cols(), LosClass::kNlos);
  const Point3 txp = tx_position(map, tx);
  for (int r = 0; r < map.rows(); ++r) {
    for (int c = 0; c < map.cols(); ++c) {
      const auto& paths = channels.at(r, c).paths;
      if (paths.empty()) continue;
      const Point3 rxp = rx_position(map, r, c, channels.rx_height_m);
      const double az = std::atan2(-(rxp.y - txp.y), rxp.x - txp.x);
      const double el = std::atan2(rxp.z - txp.z, std::hypot(rxp.x - txp.x, rxp.y - txp.y));

      // The direct path is the one leaving along the Tx -> Rx line.
      const PathParams* direct = nullptr;
      for (const auto& p : paths) {
        const double daz = std::remainder(p.aod_azimuth - az, 2.0 * std::numbers::pi);
        if (std::abs(daz) < kAngleTolerance && std::abs(p.aod_elevation - el) < kAngleTolerance) {
          direct = &p;
          break;
        }
      }
      if (direct == nullptr) continue;
      const bool strongest = std::ranges::all_of(paths, [&](const PathParams& p) { return p.magnitude <= direct->magnitude; });
      const bool shaded = trace_segment(map, txp, rxp).vegetation_m > 0.0;
      out(r, c) = strongest && !shaded ? LosClass::kLosDominant : LosClass::kLosAttenuated;
    }
  }
  return out;
}

}  // namespace beamgrid
