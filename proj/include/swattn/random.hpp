// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "swattn/tensor.hpp"

namespace swattn {

/**
 * Reproducible generator for fixtures.
 *
 * Bits come from std::mt19937_64 seeded directly with the 64-bit seed; its
 * output sequence is fixed by the C++ standard. Uniform doubles take the top
 * 53 bits of one draw. Normal samples use the Marsaglia polar method, drawing
 * pairs and returning the cached second value on alternate calls. Nothing
 * here goes through std::*_distribution, whose algorithms are
 * implementation-defined.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  // Uniform integer in [lo, hi].
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct NormalSpec {
  double mean = 0.0;
  double stddev = 1.0;
};

// Tensor of i.i.d. normal samples in row-major order. Throws ShapeError for
// an empty shape or any zero extent.
Tensor seeded_random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                            NormalSpec dist = {},
                            Precision precision = Precision::kF32);

}  // namespace swattn
