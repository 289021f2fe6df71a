// SPDX-License-Identifier: Apache-2.0
#include "swattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>

#include "swattn/errors.hpp"

namespace swattn {

const char* to_string(Precision p) noexcept {
  return p == Precision::kF32 ? "f32" : "f64";
}

double round_to(Precision p, double x) noexcept {
  return p == Precision::kF32 ? static_cast<double>(static_cast<float>(x)) : x;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               Precision precision)
    : shape_(std::move(shape)), values_(std::move(values)), precision_(precision) {
  const std::size_t expected = std::accumulate(
      shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (expected != values_.size()) {
    throw ShapeError("tensor shape holds " + std::to_string(expected) +
                     " elements but buffer has " +
                     std::to_string(values_.size()));
  }
  if (precision_ == Precision::kF32) {
    for (double& v : values_) v = round_to(Precision::kF32, v);
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, Precision precision) {
  const std::size_t count = std::accumulate(
      shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  return Tensor(std::move(shape), std::vector<double>(count, 0.0), precision);
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(shape_.size()));
  }
  return shape_[axis];
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ && precision_ == other.precision_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(),
                      values_.size() * sizeof(double)) == 0);
}

Tensor Tensor::with_precision(Precision precision) const {
  return Tensor(shape_, values_, precision);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("tensor shapes differ");
}

}  // namespace

double max_abs_error(const Tensor& actual, const Tensor& reference) {
  require_same_shape(actual, reference);
  double worst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = std::abs(actual.at(i) - reference.at(i));
    if (std::isnan(d)) return d;
    worst = std::max(worst, d);
  }
  return worst;
}

double max_relative_error(const Tensor& actual, const Tensor& reference) {
  require_same_shape(actual, reference);
  double scale = 1.0;
  for (double v : reference.values()) scale = std::max(scale, std::abs(v));
  return max_abs_error(actual, reference) / scale;
}

}  // namespace swattn
