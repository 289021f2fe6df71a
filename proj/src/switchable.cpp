// SPDX-License-Identifier: Apache-2.0
#include "swattn/switchable.hpp"

#include "swattn/attention_shape.hpp"
#include "swattn/sparse_attention.hpp"

namespace swattn {

const char* to_string(AttentionMode m) noexcept {
  return m == AttentionMode::kDense ? "dense" : "sparse";
}

std::size_t visible_token_budget(const AttentionConfig& cfg) {
  return (cfg.init_blocks + cfg.local_blocks + cfg.topk_blocks) * cfg.block_size;
}

std::size_t switch_threshold(const AttentionConfig& cfg, const SwitchPolicy& policy) {
  if (policy.threshold) return *policy.threshold;
  return cfg.switch_threshold != 0 ? cfg.switch_threshold : visible_token_budget(cfg);
}

AttentionMode choose_mode(std::size_t kv_len, const AttentionConfig& cfg,
                          const SwitchPolicy& policy) {
  if (policy.forced_mode) return *policy.forced_mode;
  return kv_len <= switch_threshold(cfg, policy) ? AttentionMode::kDense : AttentionMode::kSparse;
}

SwitchResult attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionConfig& cfg,
                    const SwitchPolicy& policy, OpCounter* counter) {
  validate_config(cfg);
  check_qkv_shapes(q, k, v, cfg);
  const AttentionMode mode = choose_mode(k.extent(0), cfg, policy);
  if (mode == AttentionMode::kDense) {
    return {tiled_gqa_forward(q, k, v, true, cfg, policy.tiles, counter), mode};
  }
  const BlockSelection sel = select_blocks(q, k, cfg, policy.selection, counter, policy.tiles);
  return {sparse_forward(q, k, v, sel, cfg, counter), mode};
}

}  // namespace swattn
