// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "swattn/block_selection.hpp"
#include "swattn/config.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

// True when key token `t` is visible to query row `row` of KV group `group`:
// its block is selected and t <= position(row).
bool token_visible(const BlockSelection& sel, std::size_t row, std::size_t group, std::size_t t);

/**
 * Block-sparse attention over the tokens selected in `sel`.
 *
 * One work item is one query row and handles all G heads of every KV group,
 * sharing each loaded key tile across the group. Selected blocks are walked
 * in increasing order in tiles of `key_tile` tokens (0 means the selection
 * block size; otherwise it must divide it) with an online softmax. Inside
 * the row's own block keys past the row's position are masked.
 *
 * `sel` must have q_len rows, h_kv groups and seq_len == kv_len. Charged to
 * Stage::kSparse: 2 * d_h MACs and one exp per visible (row, head, key).
 * Throws ShapeError if a row sees no token.
 */
AttentionResult sparse_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                               const BlockSelection& sel, const AttentionConfig& cfg,
                               OpCounter* counter = nullptr, std::size_t key_tile = 0);

// Gradients of sum(O * dO) through the masked softmax; the selection itself
// is treated as a constant. Probabilities are recomputed from the forward
// lse (`forward`, or a fresh sparse_forward when null).
//
// dQ is computed per query row. dK and dV are computed per (KV group, key
// block) from the rows that selected that block, visited in increasing row
// order, so results do not depend on the worker count.
Gradients sparse_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                          const BlockSelection& sel, const Tensor& d_out,
                          const AttentionConfig& cfg, const AttentionResult* forward = nullptr);

// Reference semantics: for each (row, head) the full masked logit row over
// all kv_len keys is materialized with -inf outside the visible set, then
// softmax-normalized directly.
AttentionResult masked_naive_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const BlockSelection& sel, const AttentionConfig& cfg);

// MACs sparse_forward charges for `sel` with this head geometry, computed
// from the selection alone.
std::uint64_t sparse_mac_count(const BlockSelection& sel, std::size_t query_heads,
                               std::size_t head_dim);

}  // namespace swattn
