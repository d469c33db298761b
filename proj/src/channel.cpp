#include "beamgrid/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "beamgrid/error.hpp"

namespace beamgrid {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// |x_i^H a_N(omega)|^2 for every vector of a sub-codebook.
std::vector<double> subcodebook_gains(const std::vector<CVector>& vectors, double omega) {
  const CVector a = steering_vector(static_cast<int>(vectors.front().size()), omega);
  std::vector<double> gains(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) gains[i] = std::norm(inner(vectors[i], a));
  return gains;
}

double sector_response(const Beam& beam, double aoa_azimuth) {
  return beam.w[static_cast<std::size_t>(sector_index(aoa_azimuth, static_cast<int>(beam.w.size())))];
}

}  // namespace

EffectiveChannelTensor::EffectiveChannelTensor(BeamDims dims, std::vector<double> values)
    : dims_(dims), values_(std::move(values)) {
  require(values_.size() == static_cast<std::size_t>(dims_.size()), "tensor size does not match beam dims");
}

double EffectiveChannelTensor::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double EffectiveChannelTensor::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

CVector steering_vector(int n, double omega) {
  require(n >= 1, "steering vector length must be positive");
  CVector a(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) a[k] = std::polar(1.0, omega * k);
  return a;
}

LocalDirection global_to_array_frame(double aod_azimuth, double aod_elevation, const ArrayFrame& frame) {
  const double ce = std::cos(aod_elevation);
  const double x = ce * std::cos(aod_azimuth);
  const double y = ce * std::sin(aod_azimuth);
  const double z = std::sin(aod_elevation);

  // Undo the boresight azimuth (rotation about the vertical axis).
  const double ca = std::cos(frame.boresight_azimuth);
  const double sa = std::sin(frame.boresight_azimuth);
  const double x1 = ca * x + sa * y;
  const double y1 = -sa * x + ca * y;
  const double z1 = z;

  // Undo the downtilt (rotation about the transverse axis y1) so the tilted
  // boresight (cos t, 0, -sin t) lands on x'.
  const double ct = std::cos(frame.downtilt);
  const double st = std::sin(frame.downtilt);
  const double xl = ct * x1 - st * z1;
  const double yl = y1;
  const double zl = st * x1 + ct * z1;

  LocalDirection d;
  d.theta = std::atan2(std::hypot(yl, zl), xl);
  d.phi = std::atan2(zl, yl);
  return d;
}

BeamspaceAngles beamspace_angles(double phi, double theta) {
  const double s = std::numbers::pi * std::sin(theta);
  return {s * std::cos(phi), s * std::sin(phi)};
}

BeamspaceAngles departure_beamspace(const PathParams& path, const ArrayFrame& frame) {
  const LocalDirection d = global_to_array_frame(path.aod_azimuth, path.aod_elevation, frame);
  return beamspace_angles(d.phi, d.theta);
}

int sector_index(double aoa_azimuth, int nr) {
  require(nr >= 1, "sector count must be positive");
  double a = std::fmod(aoa_azimuth, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  const int idx = static_cast<int>(std::floor(a * nr / kTwoPi));
  return std::clamp(idx, 0, nr - 1);
}

std::vector<double> sector_select(double aoa_azimuth, int nr) {
  std::vector<double> w(static_cast<std::size_t>(nr), 0.0);
  w[static_cast<std::size_t>(sector_index(aoa_azimuth, nr))] = 1.0;
  return w;
}

double beam_gain(const MultipathChannel& channel, const Beam& beam, const ArrayFrame& frame) {
  double rss = 0.0;
  for (const auto& p : channel.paths) {
    const BeamspaceAngles bs = departure_beamspace(p, frame);
    const double gu = std::norm(inner(beam.u, steering_vector(static_cast<int>(beam.u.size()), bs.varphi)));
    const double gv = std::norm(inner(beam.v, steering_vector(static_cast<int>(beam.v.size()), bs.vartheta)));
    const double gw = sector_response(beam, p.aoa_azimuth);
    rss += p.magnitude * p.magnitude * gu * gv * gw * gw;
  }
  return rss;
}

double instantaneous_gain(const MultipathChannel& channel, const Beam& beam, const ArrayFrame& frame) {
  Complex h{0.0, 0.0};
  for (const auto& p : channel.paths) {
    const BeamspaceAngles bs = departure_beamspace(p, frame);
    const Complex gu = inner(beam.u, steering_vector(static_cast<int>(beam.u.size()), bs.varphi));
    const Complex gv = inner(beam.v, steering_vector(static_cast<int>(beam.v.size()), bs.vartheta));
    h += std::polar(p.magnitude, p.phase) * gu * gv * sector_response(beam, p.aoa_azimuth);
  }
  return std::norm(h);
}

EffectiveChannelTensor effective_tensor(const MultipathChannel& channel, const Codebook& codebook,
                                        const ArrayFrame& frame) {
  const BeamDims& dims = codebook.dims();
  EffectiveChannelTensor t(dims);
  for (const auto& p : channel.paths) {
    if (p.magnitude == 0.0) continue;
    const BeamspaceAngles bs = departure_beamspace(p, frame);
    const std::vector<double> ga = subcodebook_gains(codebook.azimuth_vectors(), bs.varphi);
    const std::vector<double> ge = subcodebook_gains(codebook.elevation_vectors(), bs.vartheta);
    const int ir = sector_index(p.aoa_azimuth, dims.nr);
    const double power = p.magnitude * p.magnitude;
    for (int ia = 0; ia < dims.na; ++ia) {
      for (int ie = 0; ie < dims.ne; ++ie) t.at({ia, ie, ir}) += power * ga[ia] * ge[ie];
    }
  }
  return t;
}

OptimalBeam optimal_beam(const EffectiveChannelTensor& tensor) {
  const auto v = tensor.values();
  OptimalBeam best;
  if (v.empty()) return best;
  int arg = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[i] > v[arg]) arg = i;
  }
  best.flat = arg;
  best.index = tensor.dims().unflat(arg);
  best.valid = v[arg] > 0.0;
  return best;
}

std::vector<int> rank_descending(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace beamgrid
