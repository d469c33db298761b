#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "beamgrid/channel.hpp"
#include "beamgrid/codebook.hpp"

namespace beamgrid {

enum class LossKind { kCE, kCEP, kWS, kIR, kGR };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

// Joint: one head over all beams. Sep: azimuth, elevation and sector heads.
enum class HeadForm { kJoint, kSep };

// Concatenated per-head vectors; heads are contiguous in `values`.
class HeadVector {
 public:
  HeadVector() = default;
  HeadVector(HeadForm form, std::vector<int> head_sizes, std::vector<double> values);

  HeadForm form() const noexcept { return form_; }
  int head_count() const noexcept { return static_cast<int>(head_sizes_.size()); }
  int head_size(int h) const { return head_sizes_.at(static_cast<std::size_t>(h)); }
  const std::vector<int>& head_sizes() const noexcept { return head_sizes_; }
  std::span<const double> head(int h) const;
  std::span<double> head(int h);

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const HeadVector&, const HeadVector&) = default;

 private:
  std::size_t offset(int h) const;

  HeadForm form_ = HeadForm::kJoint;
  std::vector<int> head_sizes_;
  std::vector<double> values_;
};

class Logits : public HeadVector {
 public:
  using HeadVector::HeadVector;
  static Logits joint(std::vector<double> values);
  static Logits sep(std::vector<double> azimuth, std::vector<double> elevation, std::vector<double> sector);
  // Sep head sizes for the codebook, with values copied from a flat vector.
  static Logits with_layout(HeadForm form, const BeamDims& dims, std::vector<double> values);
};

class SoftTarget : public HeadVector {
 public:
  using HeadVector::HeadVector;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as the logits values
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// Cross entropy against the optimal beam; the sep form sums the three heads.
LossResult ce_loss(const Logits& logits, BeamIndex target, const BeamDims& dims);

// Relative dB floored at floor_db: max(10 log10(v / max v), floor_db).
std::vector<double> floored_db(std::span<const double> power, double floor_db);

// Floored dB shifted to be non-negative and normalized. The sep form holds
// the three axis marginals of the joint target.
SoftTarget cep_target(const EffectiveChannelTensor& tensor, double floor_db, HeadForm form = HeadForm::kJoint);

LossResult cep_loss(const Logits& logits, const SoftTarget& soft);

// Euclidean distances between the index triples of all beam pairs.
class BeamDistanceMatrix {
 public:
  explicit BeamDistanceMatrix(const BeamDims& dims);

  int size() const noexcept { return n_; }
  double operator()(int i, int j) const { return d_[static_cast<std::size_t>(i) * n_ + j]; }
  std::span<const double> data() const noexcept { return d_; }
  double max() const noexcept { return max_; }

 private:
  int n_ = 0;
  std::vector<double> d_;
  double max_ = 0.0;
};

// Default entropic regularization relative to the largest ground cost.
inline constexpr double kDefaultEpsilonScale = 1e-3;

// Entropic transport cost between softmax(logits) and the one-hot target
// under ground cost D (joint form only).
LossResult ws_loss(const Logits& logits, int target_flat, const BeamDistanceMatrix& distances, double epsilon);

// Sum of three 1-D transport costs with |i - j| ground cost per head;
// epsilon = epsilon_scale * max(1, head length - 1).
LossResult ws_loss_sep(const Logits& logits, BeamIndex target, double epsilon_scale = kDefaultEpsilonScale);

// Index regression: sep logits with three scalar heads read as a real-valued
// beam triple. Loss = sum_d (pred_d - target_d)^2 / 3.
LossResult ir_loss(const Logits& prediction, BeamIndex target);

// Beams ordered by distance of their index triple to the regressed triple,
// ties by flat index.
std::vector<int> ir_ranking(std::span<const double> triple, const BeamDims& dims);

// Gain regression target: floored relative dB of the tensor (joint) or of
// each axis marginal (sep).
HeadVector gr_target(const EffectiveChannelTensor& tensor, double floor_db, HeadForm form = HeadForm::kJoint);

// Mean squared error per head, summed over heads.
LossResult gr_loss(const Logits& prediction, const EffectiveChannelTensor& target, double floor_db);
LossResult mse_loss(const HeadVector& prediction, const HeadVector& target);

struct GradCheckResult {
  double max_relative = 0.0;  // max |analytic - numeric| / (|numeric| + 1e-12)
  double max_absolute = 0.0;
};

using LossFunction = std::function<LossResult(std::span<const double>)>;

// Central finite differences on every coordinate of the point.
GradCheckResult grad_check(const LossFunction& loss, std::span<const double> point, double step = 1e-5);

}  // namespace beamgrid
