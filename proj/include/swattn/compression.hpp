// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "swattn/config.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

// Mean-pooled key summaries. Entry i averages tokens
// [i * stride, i * stride + length); only complete windows are kept.
struct CompressedKeys {
  Tensor keys;                 // [m, h_kv, d_h]; empty when m == 0
  std::size_t pool_length = 0;
  std::size_t pool_stride = 0;
  std::size_t kv_heads = 0;
  std::size_t head_dim = 0;
  std::size_t seq_len = 0;     // tokens in the pooled sequence
  std::vector<std::size_t> span_end;  // last pooled token of each entry

  std::size_t count() const noexcept { return span_end.size(); }

  // Number of entries query position `pos` may see under causal masking:
  // those whose whole span ends at or before pos.
  std::size_t visible_count(std::size_t pos) const noexcept;
  const double* entry(std::size_t i, std::size_t kv_head) const { return keys.row(i, kv_head); }
};

enum class ScoreKind : std::uint8_t {
  kC1,            // per query head, over stage-1 compressed keys
  kC2,            // per query head, over the coarser normalizer keys
  kShared,        // summed over each head group
  kSharedApprox,  // group sums normalized with the coarse log-sum-exp
  kCmp,           // max-pooled to selection-block granularity
};

const char* to_string(ScoreKind k) noexcept;

/**
 * Scores for a run of query rows.
 *
 * `scores` is [rows, planes, cols]: planes are query heads for kC1/kC2 and KV
 * groups otherwise. Masked (causally future) columns hold exactly 0. Rows with
 * no visible column are all zero and flagged in `empty_rows`.
 */
struct ScoreMatrix {
  Tensor scores;
  ScoreKind kind = ScoreKind::kC1;
  std::vector<std::uint8_t> empty_rows;
  std::size_t seq_len = 0;       // tokens in the keyed sequence
  std::size_t query_offset = 0;  // absolute position of row 0

  std::size_t rows() const { return scores.extent(0); }
  std::size_t planes() const { return scores.extent(1); }
  std::size_t cols() const { return scores.extent(2); }
  double at(std::size_t row, std::size_t plane, std::size_t col) const {
    return scores.at(row, plane, col);
  }
  bool row_empty(std::size_t row) const { return empty_rows[row] != 0; }
};

// Throws ShapeError unless length >= stride >= 1. A sequence shorter than
// `length` yields m = 0.
CompressedKeys mean_pool_keys(const Tensor& k, std::size_t length, std::size_t stride);

// Row r is the softmax over the entries visible to position(r) (all entries
// when !causal) of (Q_r . K^C) * cfg.compressed_logit_scale(). Charged to
// Stage::kSelectionPass1: d_h MACs and one exp per visible (row, head, entry).
ScoreMatrix compressed_scores(const Tensor& q, const CompressedKeys& ck,
                              const AttentionConfig& cfg, bool causal,
                              ScoreKind kind = ScoreKind::kC1,
                              OpCounter* counter = nullptr);

// Sums each run of `group_size` consecutive head planes.
ScoreMatrix head_group_sum(const ScoreMatrix& per_head, std::size_t group_size);

// Column j of the result is the max over input columns [j*stride, j*stride +
// length), truncated at the last column; a window holding no column scores 0.
// The result has `out_cols` columns, default ceil(cols / stride).
ScoreMatrix max_pool_scores(const ScoreMatrix& shared, std::size_t length, std::size_t stride,
                            std::optional<std::size_t> out_cols = std::nullopt);

}  // namespace swattn
