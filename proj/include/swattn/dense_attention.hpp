// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "swattn/attention_shape.hpp"
#include "swattn/config.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

struct AttentionResult {
  Tensor output;  // [q_len, h_q, d_h]
  Tensor lse;     // [q_len, h_q], natural log-sum-exp of the scaled logits
};

struct Gradients {
  Tensor dq;  // [q_len, h_q, d_h]
  Tensor dk;  // [kv_len, h_kv, d_h]
  Tensor dv;  // [kv_len, h_kv, d_h]
};

struct TileShape {
  std::size_t query = 64;
  std::size_t key = 64;
};

// Grouped-query attention computed directly: for every (row, head) the full
// row of logits Q K^T / sqrt(d_h) is formed, max-subtracted, exponentiated,
// and normalized in 64-bit. With `causal`, row r sees keys 0..position(r).
//
// When `row_sums` is non-null it receives the sum of each normalized
// probability row, indexed [row * h_q + head].
AttentionResult naive_gqa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  bool causal, const AttentionConfig& cfg,
                                  OpCounter* counter = nullptr,
                                  std::vector<double>* row_sums = nullptr);

// Streaming (online-softmax) attention over query tiles of `tiles.query`
// rows of a single head and key tiles of `tiles.key` tokens. Work items are
// (head, query tile) pairs and run in parallel; per item the only score
// storage is one tiles.query x tiles.key block. Lanes past the end of the
// sequence or in the causal future are masked to -inf before the running max.
AttentionResult tiled_gqa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  bool causal, const AttentionConfig& cfg,
                                  TileShape tiles, OpCounter* counter = nullptr);

// Gradients of sum(O * dO) with respect to Q, K, V.
Gradients naive_gqa_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& d_out, bool causal, const AttentionConfig& cfg);

// MACs charged to Stage::kDense by either forward path for this shape:
// 2 * d_h per visible (row, head, key) triple.
std::uint64_t dense_mac_count(const AttentionShape& shape, bool causal);

}  // namespace swattn
