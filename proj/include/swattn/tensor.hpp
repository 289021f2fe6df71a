// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace swattn {

enum class Precision : std::uint8_t {
  kF32 = 0,
  kF64 = 1,
};

const char* to_string(Precision p) noexcept;

/**
 * Dense row-major buffer with an explicit shape. The token axis is always
 * outermost: queries are [n, h_q, d_h], keys and values [n, h_kv, d_h].
 *
 * Values are held as doubles. A kF32 tensor rounds every value through float
 * on construction, so its contents are exactly what 32-bit storage would hold
 * while arithmetic on it still runs in 64-bit.
 *
 * Immutable after construction.
 */
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         Precision precision = Precision::kF32);

  static Tensor zeros(std::vector<std::size_t> shape,
                      Precision precision = Precision::kF32);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  Precision precision() const noexcept { return precision_; }

  std::span<const double> values() const noexcept { return values_; }
  std::vector<double> to_vector() const { return values_; }

  double at(std::size_t i) const { return values_[i]; }
  double at(std::size_t i, std::size_t j) const {
    return values_[i * shape_[1] + j];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Innermost row of a rank-3 tensor.
  const double* row(std::size_t i, std::size_t j) const {
    return values_.data() + (i * shape_[1] + j) * shape_[2];
  }

  // Same shape, precision, and bit pattern.
  bool bitwise_equal(const Tensor& other) const noexcept;

  // Copy with a different storage precision.
  Tensor with_precision(Precision precision) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  Precision precision_ = Precision::kF32;
};

double round_to(Precision p, double x) noexcept;

// max |a - b| / max(max |b|, 1). Shapes must match.
double max_relative_error(const Tensor& actual, const Tensor& reference);
double max_abs_error(const Tensor& actual, const Tensor& reference);

}  // namespace swattn
