#include "beamgrid/tensor_map.hpp"

#include <algorithm>

namespace beamgrid {

TensorMap::TensorMap(int rows, int cols, BeamDims dims)
    : dims_(dims),
      valid_(rows, cols, 0),
      values_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) *
                  static_cast<std::size_t>(dims.size()),
              0.0) {}

std::span<double> TensorMap::tensor(int r, int c) {
  const std::size_t n = static_cast<std::size_t>(dims_.size());
  return std::span<double>(values_).subspan(valid_.index(r, c) * n, n);
}

std::span<const double> TensorMap::tensor(int r, int c) const {
  const std::size_t n = static_cast<std::size_t>(dims_.size());
  return std::span<const double>(values_).subspan(valid_.index(r, c) * n, n);
}

EffectiveChannelTensor TensorMap::tensor_copy(int r, int c) const {
  const auto t = tensor(r, c);
  return EffectiveChannelTensor(dims_, std::vector<double>(t.begin(), t.end()));
}

void TensorMap::set(int r, int c, const EffectiveChannelTensor& t) {
  require(t.dims() == dims_, "tensor dims do not match the map");
  std::ranges::copy(t.values(), tensor(r, c).begin());
}

std::size_t TensorMap::valid_count() const {
  return static_cast<std::size_t>(std::ranges::count_if(valid_.data(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace beamgrid
