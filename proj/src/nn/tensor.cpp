#include "hvac/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace hvac::nn {

Tensor Tensor::from(std::size_t r, std::size_t c, std::vector<double> values) {
  if (values.size() != r * c) {
    throw ShapeError("tensor data size " + std::to_string(values.size()) +
                     " does not match " + std::to_string(r) + "x" + std::to_string(c));
  }
  Tensor t;
  t.rows = r;
  t.cols = c;
  t.data = std::move(values);
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return from(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

}  // namespace hvac::nn
