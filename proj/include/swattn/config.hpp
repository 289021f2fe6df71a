// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace swattn {

/**
 * Architectural and sparsity hyperparameters.
 *
 * Token-valued fields count tokens; block-valued fields count selection
 * blocks of `block_size` tokens. The max-pool window (`cmp_length`,
 * `cmp_stride`) is measured in stage-1 compressed entries.
 *
 * JSON form uses the short names: n, d, d_h, h_q, h_kv, G, B, l_C1, s_C1,
 * l_C2, s_C2, l, s, N_init, N_local, k_top, w, switch_threshold, plus the
 * optional flags scale_compressed and experimental.
 */
struct AttentionConfig {
  std::size_t n = 32768;           // sequence length
  std::size_t model_dim = 4096;    // d
  std::size_t head_dim = 128;      // d_h
  std::size_t query_heads = 32;    // h_q
  std::size_t kv_heads = 2;        // h_kv
  std::size_t group_size = 16;     // G = h_q / h_kv

  std::size_t block_size = 64;     // B
  std::size_t c1_length = 32;      // l_C1
  std::size_t c1_stride = 16;      // s_C1
  std::size_t c2_length = 128;     // l_C2
  std::size_t c2_stride = 64;      // s_C2
  std::size_t cmp_length = 5;      // l
  std::size_t cmp_stride = 4;      // s

  std::size_t init_blocks = 1;     // N_init
  std::size_t local_blocks = 32;   // N_local
  std::size_t topk_blocks = 63;    // k_top
  std::size_t window = 512;        // w

  // 0 selects the visible-token budget.
  std::size_t switch_threshold = 0;

  // Apply 1/sqrt(d_h) to compressed-score logits, as dense attention does.
  bool scale_compressed_scores = true;

  // Skips the pooling-profile divisibility rules.
  bool experimental = false;

  // 8B-model geometry with the long-context selection settings.
  static AttentionConfig long_context_default();

  // Long-context geometry and counts, pooling sizes derived from `block`
  // (l_C1 = B/2, s_C1 = B/4, l_C2 = 2B, s_C2 = B, l = 5, s = 4).
  static AttentionConfig pooling_profile(std::size_t block);

  // Small desk-scale profile used by the correctness suite: B = 16, G = 2.
  static AttentionConfig small_profile();

  // Sets h_q/h_kv/d_h and keeps G and d consistent.
  AttentionConfig& with_heads(std::size_t h_q, std::size_t h_kv, std::size_t d_h);

  double logit_scale() const;
  double compressed_logit_scale() const;
};

bool operator==(const AttentionConfig& a, const AttentionConfig& b);

// Returns `cfg` if every invariant holds; throws ConfigError naming the first
// violated one otherwise.
const AttentionConfig& validate_config(const AttentionConfig& cfg);

void to_json(nlohmann::json& j, const AttentionConfig& cfg);
// Missing keys keep their long_context_default() values, except G, which defaults
// to h_q / h_kv. Unknown keys are rejected.
void from_json(const nlohmann::json& j, AttentionConfig& cfg);

AttentionConfig load_config(const std::string& path);

}  // namespace swattn
