#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "beamgrid/channel.hpp"
#include "beamgrid/grid.hpp"
#include "beamgrid/scene.hpp"
#include "beamgrid/tensor_map.hpp"

namespace beamgrid {

struct LinkBudget {
  double tx_power_dbm = 23.0;
  double noise_psd_dbm_hz = -174.0;
  double bandwidth_hz = 1e7;
  double noise_figure_db = 0.0;
  double exclusion_threshold_db = -147.0;  // applied to the best-beam path gain

  void validate() const;
};

// Ranked beam flat indices; position = rank.
struct CandidateSet {
  std::vector<int> beams;

  std::size_t size() const noexcept { return beams.size(); }
  bool contains_within(int beam, int k) const;
};

struct EvalReport {
  std::vector<int> k;
  std::vector<double> accuracy;
  std::vector<double> tpr;
  std::size_t samples = 0;
  std::size_t excluded = 0;  // pixels not scored (no link or below threshold)
};

double noise_power_dbm(const LinkBudget& budget);

// True when the best-beam path gain is below the exclusion threshold. A gain
// exactly at the threshold is kept.
bool is_excluded(std::span<const double> tensor, const LinkBudget& budget);

// 1 = excluded. Pixels already marked invalid in the map are excluded too.
Grid<std::uint8_t> exclusion_mask(const TensorMap& tensors, const LinkBudget& budget);

// Linear SNR for a unit-Tx-power path gain.
double snr(double rss_linear, const LinkBudget& budget);

double topk_accuracy(std::span<const int> truths, std::span<const CandidateSet> preds, int k);

double throughput_ratio(std::span<const EffectiveChannelTensor> tensors, std::span<const CandidateSet> preds, int k,
                        const LinkBudget& budget);

// Scores per-pixel candidates (indexed row-major, like the map) over the
// valid, non-excluded pixels of the ground-truth map.
EvalReport evaluate(const TensorMap& truth, std::span<const CandidateSet> preds, std::span<const int> k_list,
                    const LinkBudget& budget);

enum class HitState : std::uint8_t { kMiss = 0, kHit = 1, kNotScored = 2 };

Grid<HitState> hit_map(const TensorMap& truth, std::span<const CandidateSet> preds, int k,
                       const LinkBudget& budget);

enum class LosClass : std::uint8_t { kLosDominant = 0, kLosAttenuated = 1, kNlos = 2 };

// Direct path present and strongest -> dominant; present but under the
// canopy or outpowered by a reflection -> attenuated; absent -> NLoS.
Grid<LosClass> los_class_map(const HeightMap& map, const TxSite& tx, const SceneChannels& channels);

}  // namespace beamgrid
