#include "beamgrid/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "beamgrid/error.hpp"

namespace beamgrid {

namespace {

constexpr double kNormTolerance = 1e-12;

void validate_subcodebook(const std::vector<CVector>& vectors, const char* name) {
  require(!vectors.empty(), std::string(name) + " sub-codebook is empty");
  for (const auto& x : vectors) {
    require(x.size() == vectors.size(),
            std::string(name) + " sub-codebook must hold one beam per antenna");
    double norm2 = 0.0;
    for (const auto& z : x) norm2 += std::norm(z);
    require(std::abs(std::sqrt(norm2) - 1.0) <= kNormTolerance,
            std::string(name) + " beam weights must have unit norm");
  }
}

std::vector<CVector> dft_vectors(int n) {
  std::vector<CVector> out(static_cast<std::size_t>(n), CVector(static_cast<std::size_t>(n)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      // Reduce i*k mod n first so the phase stays in [0, 2 pi).
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((i * k) % n) / n;
      out[i][k] = std::polar(scale, phase);
    }
  }
  return out;
}

double gram_error(const std::vector<CVector>& vectors) {
  double err = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = 0; j < vectors.size(); ++j) {
      const Complex g = inner(vectors[i], vectors[j]);
      err = std::max(err, std::abs(g - Complex(i == j ? 1.0 : 0.0, 0.0)));
    }
  }
  return err;
}

}  // namespace

Complex inner(const CVector& x, const CVector& y) {
  require(x.size() == y.size(), "inner product of vectors with different lengths");
  Complex acc{0.0, 0.0};
  for (std::size_t k = 0; k < x.size(); ++k) acc += std::conj(x[k]) * y[k];
  return acc;
}

Codebook::Codebook(std::vector<CVector> azimuth, std::vector<CVector> elevation, int nr)
    : azimuth_(std::move(azimuth)), elevation_(std::move(elevation)) {
  validate_subcodebook(azimuth_, "azimuth");
  validate_subcodebook(elevation_, "elevation");
  require(nr >= 1, "Rx sector count must be positive");
  dims_ = {static_cast<int>(azimuth_.size()), static_cast<int>(elevation_.size()), nr};
}

Codebook Codebook::dft(int na, int ne, int nr) {
  require(na >= 1 && ne >= 1 && nr >= 1, "codebook dimensions must be positive");
  return Codebook(dft_vectors(na), dft_vectors(ne), nr);
}

Beam Codebook::beam(BeamIndex index) const {
  require(dims_.contains(index), "beam index outside the codebook");
  Beam b;
  b.u = azimuth_[static_cast<std::size_t>(index.ia)];
  b.v = elevation_[static_cast<std::size_t>(index.ie)];
  b.w.assign(static_cast<std::size_t>(dims_.nr), 0.0);
  b.w[static_cast<std::size_t>(index.ir)] = 1.0;
  b.index = index;
  return b;
}

double Codebook::unitarity_error() const {
  return std::max(gram_error(azimuth_), gram_error(elevation_));
}

}  // namespace beamgrid
