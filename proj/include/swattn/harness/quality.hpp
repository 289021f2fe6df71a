// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "swattn/block_selection.hpp"
#include "swattn/config.hpp"
#include "swattn/tensor.hpp"

namespace swattn::harness {

// Geometry used when no config is given: B = 64 with the matching pooling
// sizes, N_init = 1, N_local = 4, k_top = 8, w = 128, h_q = 4, h_kv = 2,
// d_h = 32, n = 4096.
AttentionConfig quality_config();

struct QualityReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t topk_blocks = 0;
  double exact_recall = 0.0;
  double approx_recall = 0.0;
  double random_recall = 0.0;
  // |top-k approx ∩ top-k exact| / |top-k exact| averaged over groups, per
  // row; empty for rows whose exact selection has no top-k blocks.
  std::vector<std::optional<double>> row_overlap;
  double mean_overlap = 0.0;
};

// Same initial and local blocks as `exact`, plus a uniformly random pick of
// as many top-k blocks as `exact` used, drawn from the same candidate pool.
BlockSelection random_baseline(const BlockSelection& exact, std::uint64_t seed);

// Mean over (row, head) of the dense causal attention probability that
// falls on tokens visible under `sel`.
double attention_mass_recall(const Tensor& q, const Tensor& k, const BlockSelection& sel,
                             const AttentionConfig& cfg);

QualityReport run_selection_quality(const AttentionConfig& cfg, std::uint64_t seed,
                                    Precision precision = Precision::kF32);

void to_json(nlohmann::json& j, const QualityReport& report);

}  // namespace swattn::harness
