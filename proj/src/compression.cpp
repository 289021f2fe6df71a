// SPDX-License-Identifier: Apache-2.0
#include "swattn/compression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernel_util.hpp"
#include "swattn/errors.hpp"
#include "swattn/parallel.hpp"

namespace swattn {

const char* to_string(ScoreKind k) noexcept {
  switch (k) {
    case ScoreKind::kC1:
      return "c1";
    case ScoreKind::kC2:
      return "c2";
    case ScoreKind::kShared:
      return "shared";
    case ScoreKind::kSharedApprox:
      return "shared_approx";
    case ScoreKind::kCmp:
      return "cmp";
  }
  return "unknown";
}

std::size_t CompressedKeys::visible_count(std::size_t pos) const noexcept {
  if (pos + 1 < pool_length) return 0;
  return std::min(count(), (pos + 1 - pool_length) / pool_stride + 1);
}

CompressedKeys mean_pool_keys(const Tensor& k, std::size_t length, std::size_t stride) {
  if (k.rank() != 3) throw ShapeError("mean_pool_keys expects K of rank 3");
  if (stride == 0 || length < stride) {
    throw ShapeError("mean pooling needs length >= stride >= 1, got length " +
                     std::to_string(length) + ", stride " + std::to_string(stride));
  }
  const std::size_t n = k.extent(0);
  const std::size_t heads = k.extent(1);
  const std::size_t d = k.extent(2);
  const std::size_t m = n >= length ? (n - length) / stride + 1 : 0;

  std::vector<double> pooled(m * heads * d, 0.0);
  std::vector<std::size_t> span_end(m);
  const double inv = 1.0 / static_cast<double>(length);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t begin = i * stride;
    span_end[i] = begin + length - 1;
    for (std::size_t g = 0; g < heads; ++g) {
      double* dst = pooled.data() + (i * heads + g) * d;
      for (std::size_t t = begin; t < begin + length; ++t) {
        const double* src = k.row(t, g);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
      detail::scale(inv, dst, d);
    }
  }

  CompressedKeys ck;
  ck.keys = Tensor({m, heads, d}, std::move(pooled), k.precision());
  ck.pool_length = length;
  ck.pool_stride = stride;
  ck.kv_heads = heads;
  ck.head_dim = d;
  ck.seq_len = n;
  ck.span_end = std::move(span_end);
  return ck;
}

ScoreMatrix compressed_scores(const Tensor& q, const CompressedKeys& ck,
                              const AttentionConfig& cfg, bool causal, ScoreKind kind,
                              OpCounter* counter) {
  if (q.rank() != 3 || q.extent(1) != cfg.query_heads || q.extent(2) != cfg.head_dim) {
    throw ShapeError("Q does not match the configured query heads and head dim");
  }
  if (ck.kv_heads != cfg.kv_heads || ck.head_dim != cfg.head_dim ||
      cfg.query_heads % cfg.kv_heads != 0) {
    throw ShapeError("compressed keys do not match the configured KV heads");
  }
  const std::size_t q_len = q.extent(0);
  if (q_len > ck.seq_len) throw ShapeError("more query rows than pooled tokens");
  const std::size_t heads = cfg.query_heads;
  const std::size_t group = heads / cfg.kv_heads;
  const std::size_t d = cfg.head_dim;
  const std::size_t m = ck.count();
  const std::size_t offset = ck.seq_len - q_len;
  const double scale = cfg.compressed_logit_scale();

  std::vector<double> out(q_len * heads * m, 0.0);
  std::vector<std::uint8_t> empty(q_len, 0);

  parallel_for(q_len, [&](std::size_t r) {
    const std::size_t vis = causal ? ck.visible_count(r + offset) : m;
    if (vis == 0) {
      empty[r] = 1;
      return;
    }
    for (std::size_t h = 0; h < heads; ++h) {
      double* row = out.data() + (r * heads + h) * m;
      const double* qr = q.row(r, h);
      double max_logit = detail::kNegInf;
      for (std::size_t c = 0; c < vis; ++c) {
        row[c] = detail::dot(qr, ck.entry(c, h / group), d) * scale;
        max_logit = std::max(max_logit, row[c]);
      }
      double denom = 0.0;
      for (std::size_t c = 0; c < vis; ++c) {
        row[c] = std::exp(row[c] - max_logit);
        denom += row[c];
      }
      for (std::size_t c = 0; c < vis; ++c) row[c] /= denom;
    }
    charge(counter, Stage::kSelectionPass1, vis * heads * d, vis * heads);
  });

  ScoreMatrix sm;
  sm.scores = Tensor({q_len, heads, m}, std::move(out), q.precision());
  sm.kind = kind;
  sm.empty_rows = std::move(empty);
  sm.seq_len = ck.seq_len;
  sm.query_offset = offset;
  return sm;
}

ScoreMatrix head_group_sum(const ScoreMatrix& per_head, std::size_t group_size) {
  const std::size_t rows = per_head.rows();
  const std::size_t planes = per_head.planes();
  const std::size_t cols = per_head.cols();
  if (group_size == 0 || planes % group_size != 0) {
    throw ShapeError("head count " + std::to_string(planes) + " is not divisible by G = " +
                     std::to_string(group_size));
  }
  const std::size_t groups = planes / group_size;
  std::vector<double> out(rows * groups * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t h = 0; h < planes; ++h) {
      double* dst = out.data() + (r * groups + h / group_size) * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += per_head.at(r, h, c);
    }
  }
  ScoreMatrix sm;
  sm.scores = Tensor({rows, groups, cols}, std::move(out), per_head.scores.precision());
  sm.kind = ScoreKind::kShared;
  sm.empty_rows = per_head.empty_rows;
  sm.seq_len = per_head.seq_len;
  sm.query_offset = per_head.query_offset;
  return sm;
}

ScoreMatrix max_pool_scores(const ScoreMatrix& shared, std::size_t length, std::size_t stride,
                            std::optional<std::size_t> out_cols) {
  if (length == 0 || stride == 0) throw ShapeError("max pooling needs length, stride >= 1");
  const std::size_t rows = shared.rows();
  const std::size_t planes = shared.planes();
  const std::size_t cols = shared.cols();
  const std::size_t blocks = out_cols.value_or(detail::ceil_div(cols, stride));

  std::vector<double> out(rows * planes * blocks, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < planes; ++p) {
      double* dst = out.data() + (r * planes + p) * blocks;
      for (std::size_t j = 0; j < blocks; ++j) {
        const std::size_t begin = j * stride;
        const std::size_t end = std::min(cols, begin + length);
        double best = begin < end ? detail::kNegInf : 0.0;
        for (std::size_t c = begin; c < end; ++c) best = std::max(best, shared.at(r, p, c));
        dst[j] = best;
      }
    }
  }
  ScoreMatrix sm;
  sm.scores = Tensor({rows, planes, blocks}, std::move(out), shared.scores.precision());
  sm.kind = ScoreKind::kCmp;
  sm.empty_rows = shared.empty_rows;
  sm.seq_len = shared.seq_len;
  sm.query_offset = shared.query_offset;
  return sm;
}

}  // namespace swattn
