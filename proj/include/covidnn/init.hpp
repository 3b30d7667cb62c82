#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

// Glorot/Xavier uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
// Values are drawn in flat row-major order, one per element.
template <typename Scalar>
Tensor<Scalar> glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, SeededRng& rng) {
  if (fan_in < 1 || fan_out < 1)
    throw std::invalid_argument("glorot_uniform: fan_in and fan_out must be positive");
  double b = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
  Tensor<Scalar> t(std::move(shape));
  for (auto& v : t) v = static_cast<Scalar>(rng.uniform(-b, b));
  return t;
}

}  // namespace covidnn
