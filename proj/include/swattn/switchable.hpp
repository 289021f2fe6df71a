// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "swattn/block_selection.hpp"
#include "swattn/config.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

enum class AttentionMode : std::uint8_t { kDense, kSparse };

const char* to_string(AttentionMode m) noexcept;

struct SwitchPolicy {
  // Longest input served densely. Unset uses cfg.switch_threshold, and a
  // zero there uses visible_token_budget(cfg).
  std::optional<std::size_t> threshold;
  std::optional<AttentionMode> forced_mode;
  SelectionMode selection = SelectionMode::kApprox;
  TileShape tiles{};
};

// (N_init + N_local + k_top) * B: the most key tokens a sparse query sees.
std::size_t visible_token_budget(const AttentionConfig& cfg);

std::size_t switch_threshold(const AttentionConfig& cfg, const SwitchPolicy& policy);

// Dense when forced, or when kv_len <= threshold; sparse otherwise.
AttentionMode choose_mode(std::size_t kv_len, const AttentionConfig& cfg,
                          const SwitchPolicy& policy);

struct SwitchResult {
  AttentionResult result;
  AttentionMode mode;
};

// Causal attention through the mode choose_mode picks: tiled dense
// attention, or block selection followed by sparse_forward. Both paths
// return the same output and lse layout.
SwitchResult attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionConfig& cfg,
                    const SwitchPolicy& policy = {}, OpCounter* counter = nullptr);

}  // namespace swattn
