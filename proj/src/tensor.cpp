#include "vinlab/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace vinlab {

void Tensor::fill(double v) { std::fill(value_.begin(), value_.end(), v); }

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(value_.begin(), value_.end(), [](double v) { return std::isfinite(v); }) &&
         std::all_of(grad_.begin(), grad_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace vinlab
