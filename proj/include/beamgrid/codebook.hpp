#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace beamgrid {

using Complex = std::complex<double>;
using CVector = std::vector<Complex>;

struct BeamIndex {
  int ia = 0;  // Tx azimuth beam
  int ie = 0;  // Tx elevation beam
  int ir = 0;  // Rx sector

  friend bool operator==(const BeamIndex&, const BeamIndex&) = default;
};

// Codebook extents. Flat beam index = ia * (ne * nr) + ie * nr + ir.
struct BeamDims {
  int na = 8;
  int ne = 4;
  int nr = 4;

  int size() const noexcept { return na * ne * nr; }
  int heads() const noexcept { return na + ne + nr; }
  int flat(BeamIndex b) const noexcept { return b.ia * (ne * nr) + b.ie * nr + b.ir; }
  BeamIndex unflat(int flat) const noexcept { return {flat / (ne * nr), (flat / nr) % ne, flat % nr}; }
  bool contains(BeamIndex b) const noexcept {
    return b.ia >= 0 && b.ia < na && b.ie >= 0 && b.ie < ne && b.ir >= 0 && b.ir < nr;
  }

  friend bool operator==(const BeamDims&, const BeamDims&) = default;
};

struct Beam {
  CVector u;              // Tx azimuth weights, unit norm
  CVector v;              // Tx elevation weights, unit norm
  std::vector<double> w;  // Rx sector selector, canonical basis vector
  BeamIndex index;
};

// Tx azimuth and elevation sub-codebooks plus Nr canonical Rx sector
// selectors. Any set of unit-norm weight vectors can be installed, so
// externally designed beams (e.g. flat-top) drop in next to the default
// discrete-Fourier codebook.
class Codebook {
 public:
  // Every vector of a sub-codebook must have the same length as the number of
  // vectors in it (one beam per antenna) and unit Euclidean norm.
  Codebook(std::vector<CVector> azimuth, std::vector<CVector> elevation, int nr);

  // Unitary DFT codebook: u_ia[k] = exp(-j 2 pi ia k / na) / sqrt(na), same
  // for elevation with ne.
  static Codebook dft(int na, int ne, int nr);

  const BeamDims& dims() const noexcept { return dims_; }
  const CVector& azimuth(int ia) const { return azimuth_.at(static_cast<std::size_t>(ia)); }
  const CVector& elevation(int ie) const { return elevation_.at(static_cast<std::size_t>(ie)); }
  const std::vector<CVector>& azimuth_vectors() const noexcept { return azimuth_; }
  const std::vector<CVector>& elevation_vectors() const noexcept { return elevation_; }

  Beam beam(BeamIndex index) const;
  Beam beam(int flat) const { return beam(dims_.unflat(flat)); }

  // Max |<x_i, x_j> - delta_ij| over both Tx sub-codebooks.
  double unitarity_error() const;

 private:
  BeamDims dims_;
  std::vector<CVector> azimuth_;
  std::vector<CVector> elevation_;
};

// Conjugated inner product x^H y.
Complex inner(const CVector& x, const CVector& y);

}  // namespace beamgrid
