// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "swattn/config.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/tensor.hpp"

namespace swattn::harness {

struct CheckResult {
  std::string name;
  std::size_t n = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct CorrectnessOptions {
  std::uint64_t seed = 0;
  std::vector<std::size_t> sizes{1, 2, 63, 64, 65, 257};
  Precision precision = Precision::kF64;
  // Test hook: shifts one element of the tiled dense output by 1e-3 before
  // it is compared, so the dense check must fail.
  bool inject_perturbation = false;
  AttentionConfig cfg = AttentionConfig::small_profile();
};

struct CorrectnessReport {
  std::vector<CheckResult> checks;
  std::vector<std::string> warnings;

  bool passed() const;
};

// Oracle tolerance for forward comparisons: 1e-10 in f64, 1e-4 in f32.
double forward_tolerance(Precision p);

// Per size n: tiled vs naive dense forward; fused-exact vs direct group
// scores; exact vs fused-exact selection identity; sparse forward vs the
// masked oracle; sparse with every block vs dense; window coverage of the
// selection; forced-sparse vs dense dispatch when n fits the budget; and
// for n <= 16, dense and sparse backward vs central finite differences.
CorrectnessReport run_correctness(const CorrectnessOptions& options);

void to_json(nlohmann::json& j, const CorrectnessReport& report);

// Max |analytic - numeric| / max(max |numeric|, floor) where numeric is the
// central difference (step h) of sum(O * dO) with respect to each input.
struct GradientCheck {
  double dq = 0.0;
  double dk = 0.0;
  double dv = 0.0;
  double max() const;
};

using ForwardFn = std::function<Tensor(const Tensor& q, const Tensor& k, const Tensor& v)>;

GradientCheck finite_difference_check(const ForwardFn& forward, const Gradients& analytic,
                                      const Tensor& q, const Tensor& k, const Tensor& v,
                                      const Tensor& d_out, double step = 1e-4,
                                      double floor = 1e-8);

}  // namespace swattn::harness
