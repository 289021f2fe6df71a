// SPDX-License-Identifier: Apache-2.0
#include "swattn/random.hpp"

#include <cmath>

#include "swattn/errors.hpp"

namespace swattn {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw Error("Rng::below requires a positive bound");
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return mean + stddev * u * factor;
}

Tensor seeded_random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                            NormalSpec dist, Precision precision) {
  if (shape.empty()) throw ShapeError("random tensor needs at least one axis");
  std::size_t count = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("random tensor extents must be positive");
    count *= e;
  }
  Rng rng(seed);
  std::vector<double> values(count);
  for (double& v : values) v = rng.normal(dist.mean, dist.stddev);
  return Tensor(std::move(shape), std::move(values), precision);
}

}  // namespace swattn
