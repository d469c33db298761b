#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "beamgrid/channel.hpp"
#include "beamgrid/grid.hpp"

namespace beamgrid {

// Effective channel tensors over a receiver grid plus a validity mask.
// Values are stored pixel-major: the beams of one pixel are contiguous.
class TensorMap {
 public:
  TensorMap() = default;
  TensorMap(int rows, int cols, BeamDims dims);

  int rows() const noexcept { return valid_.rows(); }
  int cols() const noexcept { return valid_.cols(); }
  const BeamDims& dims() const noexcept { return dims_; }
  std::size_t pixel_count() const noexcept { return valid_.size(); }

  std::span<double> tensor(int r, int c);
  std::span<const double> tensor(int r, int c) const;
  EffectiveChannelTensor tensor_copy(int r, int c) const;
  void set(int r, int c, const EffectiveChannelTensor& t);

  bool valid(int r, int c) const { return valid_(r, c) != 0; }
  void set_valid(int r, int c, bool v) { valid_(r, c) = v ? 1 : 0; }
  const Grid<std::uint8_t>& mask() const noexcept { return valid_; }
  Grid<std::uint8_t>& mask() noexcept { return valid_; }
  std::size_t valid_count() const;

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const TensorMap&, const TensorMap&) = default;

 private:
  BeamDims dims_;
  Grid<std::uint8_t> valid_;
  std::vector<double> values_;
};

}  // namespace beamgrid
