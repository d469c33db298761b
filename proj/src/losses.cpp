#include "beamgrid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "beamgrid/error.hpp"
#include "beamgrid/optimal_transport.hpp"

namespace beamgrid {

namespace {

std::array<int, 3> components(BeamIndex b) { return {b.ia, b.ie, b.ir}; }

void require_sep_layout(const HeadVector& v, const BeamDims& dims) {
  require(v.head_count() == 3 && v.head_size(0) == dims.na && v.head_size(1) == dims.ne && v.head_size(2) == dims.nr,
          "sep heads do not match the codebook");
}

void require_joint_layout(const HeadVector& v, const BeamDims& dims) {
  require(v.head_count() == 1 && v.head_size(0) == dims.size(), "joint logits do not match the codebook");
}

// Cross entropy of one head against a distribution; accumulates the gradient.
double head_cross_entropy(std::span<const double> z, std::span<const double> target, std::span<double> grad) {
  const std::vector<double> logp = log_softmax(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (target[i] > 0.0) loss -= target[i] * logp[i];
    grad[i] = std::exp(logp[i]) - target[i];
  }
  return loss;
}

double head_cross_entropy(std::span<const double> z, int target, std::span<double> grad) {
  const std::vector<double> logp = log_softmax(z);
  for (std::size_t i = 0; i < z.size(); ++i) grad[i] = std::exp(logp[i]);
  grad[static_cast<std::size_t>(target)] -= 1.0;
  return -logp[static_cast<std::size_t>(target)];
}

// Transport cost of softmax(z) onto the point mass at `target`; the gradient
// flows through the softmax: dL/dz_j = p_j (D_jt - L).
double head_transport(std::span<const double> z, int target, std::span<const double> cost_matrix, double epsilon,
                      std::span<double> grad) {
  const std::size_t n = z.size();
  const std::vector<double> p = softmax(z);
  std::vector<double> q(n, 0.0);
  q[static_cast<std::size_t>(target)] = 1.0;
  const TransportPlan plan = sinkhorn(p, q, cost_matrix, epsilon);
  for (std::size_t j = 0; j < n; ++j) {
    grad[j] = p[j] * (cost_matrix[j * n + static_cast<std::size_t>(target)] - plan.cost);
  }
  return plan.cost;
}

std::vector<double> marginal(const EffectiveChannelTensor& t, int axis) {
  const BeamDims& d = t.dims();
  std::vector<double> out(static_cast<std::size_t>(axis == 0 ? d.na : axis == 1 ? d.ne : d.nr), 0.0);
  for (int f = 0; f < d.size(); ++f) {
    const auto c = components(d.unflat(f));
    out[static_cast<std::size_t>(c[static_cast<std::size_t>(axis)])] += t[f];
  }
  return out;
}

}  // namespace

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCE: return "CE";
    case LossKind::kCEP: return "CEP";
    case LossKind::kWS: return "WS";
    case LossKind::kIR: return "IR";
    case LossKind::kGR: return "GR";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind k : {LossKind::kCE, LossKind::kCEP, LossKind::kWS, LossKind::kIR, LossKind::kGR}) {
    if (name == to_string(k)) return k;
  }
  fail(ErrorKind::kInvalidArgument, "unknown loss kind '" + name + "'");
}

HeadVector::HeadVector(HeadForm form, std::vector<int> head_sizes, std::vector<double> values)
    : form_(form), head_sizes_(std::move(head_sizes)), values_(std::move(values)) {
  require(!head_sizes_.empty(), "head vector needs at least one head");
  require(form_ == HeadForm::kJoint ? head_sizes_.size() == 1 : head_sizes_.size() == 3,
          "joint form has one head, sep form three");
  std::size_t total = 0;
  for (int s : head_sizes_) {
    require(s >= 1, "heads must be non-empty");
    total += static_cast<std::size_t>(s);
  }
  require(total == values_.size(), "head sizes do not add up to the value count");
}

std::size_t HeadVector::offset(int h) const {
  std::size_t off = 0;
  for (int i = 0; i < h; ++i) off += static_cast<std::size_t>(head_sizes_[static_cast<std::size_t>(i)]);
  return off;
}

std::span<const double> HeadVector::head(int h) const {
  return std::span<const double>(values_).subspan(offset(h), static_cast<std::size_t>(head_size(h)));
}

std::span<double> HeadVector::head(int h) {
  return std::span<double>(values_).subspan(offset(h), static_cast<std::size_t>(head_size(h)));
}

Logits Logits::joint(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Logits(HeadForm::kJoint, {n}, std::move(values));
}

Logits Logits::sep(std::vector<double> azimuth, std::vector<double> elevation, std::vector<double> sector) {
  std::vector<int> sizes{static_cast<int>(azimuth.size()), static_cast<int>(elevation.size()),
                         static_cast<int>(sector.size())};
  std::vector<double> v = std::move(azimuth);
  v.insert(v.end(), elevation.begin(), elevation.end());
  v.insert(v.end(), sector.begin(), sector.end());
  return Logits(HeadForm::kSep, std::move(sizes), std::move(v));
}

Logits Logits::with_layout(HeadForm form, const BeamDims& dims, std::vector<double> values) {
  if (form == HeadForm::kJoint) return Logits(form, {dims.size()}, std::move(values));
  return Logits(form, {dims.na, dims.ne, dims.nr}, std::move(values));
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p = log_softmax(logits);
  for (double& x : p) x = std::exp(x);
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

LossResult ce_loss(const Logits& logits, BeamIndex target, const BeamDims& dims) {
  require(dims.contains(target), "target beam outside the codebook");
  LossResult r;
  r.grad.assign(logits.values().size(), 0.0);
  if (logits.form() == HeadForm::kJoint) {
    require_joint_layout(logits, dims);
    r.loss = head_cross_entropy(logits.head(0), dims.flat(target), r.grad);
    return r;
  }
  require_sep_layout(logits, dims);
  const auto t = components(target);
  std::size_t off = 0;
  for (int h = 0; h < 3; ++h) {
    const auto z = logits.head(h);
    r.loss += head_cross_entropy(z, t[static_cast<std::size_t>(h)], std::span<double>(r.grad).subspan(off, z.size()));
    off += z.size();
  }
  return r;
}

std::vector<double> floored_db(std::span<const double> power, double floor_db) {
  require(floor_db < 0.0, "dB floor must be negative");
  const double peak = power.empty() ? 0.0 : *std::max_element(power.begin(), power.end());
  require(peak > 0.0, "tensor has no positive entry");
  std::vector<double> out(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) {
    out[i] = power[i] > 0.0 ? std::max(10.0 * std::log10(power[i] / peak), floor_db) : floor_db;
  }
  return out;
}

SoftTarget cep_target(const EffectiveChannelTensor& tensor, double floor_db, HeadForm form) {
  std::vector<double> p = floored_db(tensor.values(), floor_db);
  double total = 0.0;
  for (double& x : p) {
    x -= floor_db;
    total += x;
  }
  for (double& x : p) x /= total;
  const BeamDims& d = tensor.dims();
  if (form == HeadForm::kJoint) return SoftTarget(form, {d.size()}, std::move(p));

  std::vector<double> heads(static_cast<std::size_t>(d.heads()), 0.0);
  for (int f = 0; f < d.size(); ++f) {
    const BeamIndex b = d.unflat(f);
    heads[static_cast<std::size_t>(b.ia)] += p[static_cast<std::size_t>(f)];
    heads[static_cast<std::size_t>(d.na + b.ie)] += p[static_cast<std::size_t>(f)];
    heads[static_cast<std::size_t>(d.na + d.ne + b.ir)] += p[static_cast<std::size_t>(f)];
  }
  return SoftTarget(form, {d.na, d.ne, d.nr}, std::move(heads));
}

LossResult cep_loss(const Logits& logits, const SoftTarget& soft) {
  require(logits.head_sizes() == soft.head_sizes(), "logits and soft target shapes differ");
  LossResult r;
  r.grad.assign(logits.values().size(), 0.0);
  std::size_t off = 0;
  for (int h = 0; h < logits.head_count(); ++h) {
    const auto z = logits.head(h);
    r.loss += head_cross_entropy(z, soft.head(h), std::span<double>(r.grad).subspan(off, z.size()));
    off += z.size();
  }
  return r;
}

BeamDistanceMatrix::BeamDistanceMatrix(const BeamDims& dims) : n_(dims.size()) {
  d_.resize(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i) {
    const BeamIndex a = dims.unflat(i);
    for (int j = 0; j < n_; ++j) {
      const BeamIndex b = dims.unflat(j);
      const double da = a.ia - b.ia;
      const double de = a.ie - b.ie;
      const double dr = a.ir - b.ir;
      const double dist = std::sqrt(da * da + de * de + dr * dr);
      d_[static_cast<std::size_t>(i) * n_ + j] = dist;
      max_ = std::max(max_, dist);
    }
  }
}

LossResult ws_loss(const Logits& logits, int target_flat, const BeamDistanceMatrix& distances, double epsilon) {
  require(logits.form() == HeadForm::kJoint, "use ws_loss_sep for sep logits");
  require(logits.head_size(0) == distances.size(), "logits and distance matrix differ in size");
  require(target_flat >= 0 && target_flat < distances.size(), "target beam outside the codebook");
  require(epsilon > 0.0, "epsilon must be positive");
  LossResult r;
  r.grad.assign(logits.values().size(), 0.0);
  r.loss = head_transport(logits.head(0), target_flat, distances.data(), epsilon, r.grad);
  return r;
}

LossResult ws_loss_sep(const Logits& logits, BeamIndex target, double epsilon_scale) {
  require(logits.form() == HeadForm::kSep, "ws_loss_sep needs sep logits");
  require(epsilon_scale > 0.0, "epsilon scale must be positive");
  const auto t = components(target);
  LossResult r;
  r.grad.assign(logits.values().size(), 0.0);
  std::size_t off = 0;
  for (int h = 0; h < 3; ++h) {
    const auto z = logits.head(h);
    const int n = static_cast<int>(z.size());
    require(t[static_cast<std::size_t>(h)] >= 0 && t[static_cast<std::size_t>(h)] < n, "target beam outside the codebook");
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cost[static_cast<std::size_t>(i) * n + j] = std::abs(i - j);
    }
    const double eps = epsilon_scale * std::max(1, n - 1);
    r.loss += head_transport(z, t[static_cast<std::size_t>(h)], cost, eps, std::span<double>(r.grad).subspan(off, z.size()));
    off += z.size();
  }
  return r;
}

LossResult ir_loss(const Logits& prediction, BeamIndex target) {
  if (prediction.form() != HeadForm::kSep) {
    fail(ErrorKind::kUnsupportedForm, "index regression is only defined for separate azimuth, elevation and sector heads");
  }
  require(prediction.values().size() == 3, "index regression expects three scalar heads");
  const auto t = components(target);
  LossResult r;
  r.grad.resize(3);
  for (std::size_t d = 0; d < 3; ++d) {
    const double diff = prediction.values()[d] - t[d];
    r.loss += diff * diff / 3.0;
    r.grad[d] = 2.0 * diff / 3.0;
  }
  return r;
}

std::vector<int> ir_ranking(std::span<const double> triple, const BeamDims& dims) {
  require(triple.size() == 3, "index regression ranking expects a triple");
  std::vector<double> dist(static_cast<std::size_t>(dims.size()));
  for (int f = 0; f < dims.size(); ++f) {
    const auto c = components(dims.unflat(f));
    double s = 0.0;
    for (std::size_t d = 0; d < 3; ++d) s += (c[d] - triple[d]) * (c[d] - triple[d]);
    dist[static_cast<std::size_t>(f)] = s;
  }
  std::vector<int> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
  return order;
}

HeadVector gr_target(const EffectiveChannelTensor& tensor, double floor_db, HeadForm form) {
  const BeamDims& d = tensor.dims();
  if (form == HeadForm::kJoint) return HeadVector(form, {d.size()}, floored_db(tensor.values(), floor_db));
  std::vector<double> v;
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<double> db = floored_db(marginal(tensor, axis), floor_db);
    v.insert(v.end(), db.begin(), db.end());
  }
  return HeadVector(form, {d.na, d.ne, d.nr}, std::move(v));
}

LossResult mse_loss(const HeadVector& prediction, const HeadVector& target) {
  require(prediction.head_sizes() == target.head_sizes(), "prediction and target shapes differ");
  LossResult r;
  r.grad.assign(prediction.values().size(), 0.0);
  std::size_t off = 0;
  for (int h = 0; h < prediction.head_count(); ++h) {
    const auto p = prediction.head(h);
    const auto t = target.head(h);
    const double n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double diff = p[i] - t[i];
      r.loss += diff * diff / n;
      r.grad[off + i] = 2.0 * diff / n;
    }
    off += p.size();
  }
  return r;
}

LossResult gr_loss(const Logits& prediction, const EffectiveChannelTensor& target, double floor_db) {
  return mse_loss(prediction, gr_target(target, floor_db, prediction.form()));
}

GradCheckResult grad_check(const LossFunction& loss, std::span<const double> point, double step) {
  require(step > 0.0, "finite-difference step must be positive");
  std::vector<double> x(point.begin(), point.end());
  const std::vector<double> analytic = loss(x).grad;
  require(analytic.size() == x.size(), "gradient size differs from the point");
  GradCheckResult out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const volatile double hi = xi + step;
    const volatile double lo = xi - step;
    x[i] = hi;
    const double up = loss(x).loss;
    x[i] = lo;
    const double down = loss(x).loss;
    x[i] = xi;
    const double numeric = (up - down) / (hi - lo);
    const double abs_err = std::abs(analytic[i] - numeric);
    out.max_absolute = std::max(out.max_absolute, abs_err);
    out.max_relative = std::max(out.max_relative, abs_err / (std::abs(numeric) + 1e-12));
  }
  return out;
}

}  // namespace beamgrid
