// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "swattn/config.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

/**
 * Extents of one attention call.
 *
 * Q may hold fewer rows than K/V: query row r then sits at absolute position
 * r + (kv_len - q_len), i.e. the queries are the last q_len tokens of the
 * sequence (a decode step is q_len = 1). With q_len == kv_len this is
 * ordinary self-attention. Heads are 0-based; query head h reads KV head
 * h / G.
 */
struct AttentionShape {
  std::size_t q_len = 0;
  std::size_t kv_len = 0;
  std::size_t query_heads = 0;
  std::size_t kv_heads = 0;
  std::size_t group_size = 0;
  std::size_t head_dim = 0;

  std::size_t query_offset() const { return kv_len - q_len; }
  std::size_t position(std::size_t row) const { return row + query_offset(); }
};

// Checks Q [q_len, h_q, d_h] and a K-shaped tensor [kv_len, h_kv, d_h]
// against cfg's head geometry. Throws ShapeError on mismatch, on zero
// lengths, or when q_len > kv_len.
AttentionShape check_qk_shapes(const Tensor& q, const Tensor& k, const AttentionConfig& cfg);

// As above, plus V must match K.
AttentionShape check_qkv_shapes(const Tensor& q, const Tensor& k, const Tensor& v,
                                const AttentionConfig& cfg);

}  // namespace swattn
