#pragma once

#include <span>
#include <vector>

#include "beamgrid/codebook.hpp"
#include "beamgrid/grid.hpp"

namespace beamgrid {

// Angle conventions (global frame): azimuth is measured counter-clockwise
// from east in the horizontal plane, elevation is the angle above the
// horizontal plane (negative below).
struct PathParams {
  double magnitude = 0.0;      // c_p, linear amplitude
  double phase = 0.0;          // psi_p in [0, 2 pi)
  double aod_azimuth = 0.0;    // departure azimuth
  double aod_elevation = 0.0;  // departure elevation
  double aoa_azimuth = 0.0;    // arrival azimuth in [0, 2 pi), pointing back toward the last scatterer

  friend bool operator==(const PathParams&, const PathParams&) = default;
};

struct MultipathChannel {
  std::vector<PathParams> paths;
  int tx_id = 0;
  Pixel rx_pixel;

  friend bool operator==(const MultipathChannel&, const MultipathChannel&) = default;
};

// Array orientation. The boresight (array normal, local x') points at
// boresight_azimuth and is tilted down by downtilt.
struct ArrayFrame {
  double boresight_azimuth = 0.0;
  double downtilt = 0.0;  // [0, pi/2]
};

// Direction in the array-local spherical frame. theta is the polar angle
// from x'; phi the azimuth in the y'-z' plane measured from y' (local
// horizontal, left of boresight) toward z' (local up).
struct LocalDirection {
  double phi = 0.0;
  double theta = 0.0;
};

struct BeamspaceAngles {
  double varphi = 0.0;    // azimuth steering phase
  double vartheta = 0.0;  // elevation steering phase
};

// Expected per-beam power for one Tx-Rx pair, shape na x ne x nr, stored by
// flat beam index.
class EffectiveChannelTensor {
 public:
  EffectiveChannelTensor() = default;
  explicit EffectiveChannelTensor(BeamDims dims)
      : dims_(dims), values_(static_cast<std::size_t>(dims.size()), 0.0) {}
  EffectiveChannelTensor(BeamDims dims, std::vector<double> values);

  const BeamDims& dims() const noexcept { return dims_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double& operator[](int flat) { return values_[static_cast<std::size_t>(flat)]; }
  double operator[](int flat) const { return values_[static_cast<std::size_t>(flat)]; }
  double& at(BeamIndex b) { return (*this)[dims_.flat(b)]; }
  double at(BeamIndex b) const { return (*this)[dims_.flat(b)]; }

  double max() const;
  double sum() const;

  friend bool operator==(const EffectiveChannelTensor&, const EffectiveChannelTensor&) = default;

 private:
  BeamDims dims_;
  std::vector<double> values_;
};

struct OptimalBeam {
  BeamIndex index;
  int flat = 0;
  bool valid = false;  // false for the all-zero tensor
};

// a_N(omega)[k] = exp(j omega k).
CVector steering_vector(int n, double omega);

LocalDirection global_to_array_frame(double aod_azimuth, double aod_elevation, const ArrayFrame& frame);

BeamspaceAngles beamspace_angles(double phi, double theta);

// Beamspace angles of a global departure direction.
BeamspaceAngles departure_beamspace(const PathParams& path, const ArrayFrame& frame);

// Index of the half-open sector [2 pi i / nr, 2 pi (i + 1) / nr) holding the
// angle, after reduction mod 2 pi.
int sector_index(double aoa_azimuth, int nr);
std::vector<double> sector_select(double aoa_azimuth, int nr);

inline Codebook dft_codebook(int na, int ne, int nr) { return Codebook::dft(na, ne, nr); }

// Phase-averaged RSS of one beam: sum_p c_p^2 |u^H a|^2 |v^H a|^2 |w^H b|^2.
double beam_gain(const MultipathChannel& channel, const Beam& beam, const ArrayFrame& frame);

// Coherent |sum_p c_p e^{j psi_p} (u^H a)(v^H a)(w^H b)|^2.
double instantaneous_gain(const MultipathChannel& channel, const Beam& beam, const ArrayFrame& frame);

// Factorized evaluation of beam_gain over the whole codebook.
EffectiveChannelTensor effective_tensor(const MultipathChannel& channel, const Codebook& codebook,
                                        const ArrayFrame& frame);

// Argmax with ties broken toward the smallest flat index.
OptimalBeam optimal_beam(const EffectiveChannelTensor& tensor);

// Beams sorted by descending value, ties by flat index.
std::vector<int> rank_descending(std::span<const double> scores);

}  // namespace beamgrid
