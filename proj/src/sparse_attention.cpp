// SPDX-License-Identifier: Apache-2.0
#include "swattn/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kernel_util.hpp"
#include "swattn/attention_shape.hpp"
#include "swattn/errors.hpp"
#include "swattn/parallel.hpp"

namespace swattn {

using detail::kNegInf;

namespace {

AttentionShape check_sparse(const Tensor& q, const Tensor& k, const Tensor& v,
                            const BlockSelection& sel, const AttentionConfig& cfg) {
  const AttentionShape s = check_qkv_shapes(q, k, v, cfg);
  if (sel.rows() != s.q_len || sel.groups() != s.kv_heads || sel.seq_len() != s.kv_len) {
    throw ShapeError("selection has " + std::to_string(sel.rows()) + " rows, " +
                     std::to_string(sel.groups()) + " groups over " +
                     std::to_string(sel.seq_len()) + " tokens; attention needs " +
                     std::to_string(s.q_len) + ", " + std::to_string(s.kv_heads) + ", " +
                     std::to_string(s.kv_len));
  }
  return s;
}

// Token range [begin, end) of block j visible to a query at `pos`.
struct Span {
  std::size_t begin;
  std::size_t end;
};

Span block_span(const BlockSelection& sel, std::uint32_t j, std::size_t pos) {
  const std::size_t begin = std::size_t{j} * sel.block_size();
  const std::size_t end = std::min({begin + sel.block_size(), pos + 1, sel.seq_len()});
  return {begin, std::max(begin, end)};
}

}  // namespace

bool token_visible(const BlockSelection& sel, std::size_t row, std::size_t group, std::size_t t) {
  if (t > sel.position(row) || t >= sel.seq_len()) return false;
  const auto blocks = sel.blocks(row, group);
  return std::binary_search(blocks.begin(), blocks.end(),
                            static_cast<std::uint32_t>(t / sel.block_size()));
}

AttentionResult sparse_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                               const BlockSelection& sel, const AttentionConfig& cfg,
                               OpCounter* counter, std::size_t key_tile) {
  const AttentionShape s = check_sparse(q, k, v, sel, cfg);
  const std::size_t bk = key_tile == 0 ? sel.block_size() : key_tile;
  if (sel.block_size() % bk != 0) {
    throw ShapeError("key tile " + std::to_string(bk) + " does not divide block size " +
                     std::to_string(sel.block_size()));
  }
  const std::size_t d = s.head_dim;
  const std::size_t G = s.group_size;
  const double scale = cfg.logit_scale();

  std::vector<double> out(s.q_len * s.query_heads * d, 0.0);
  std::vector<double> lse(s.q_len * s.query_heads, 0.0);

  parallel_for(s.q_len, [&](std::size_t r) {
    const std::size_t pos = s.position(r);
    std::vector<double> logits(G * bk);
    std::vector<double> running_max(G);
    std::vector<double> running_sum(G);
    std::vector<double> acc(G * d);
    std::uint64_t lanes = 0;

    for (std::size_t g = 0; g < s.kv_heads; ++g) {
      std::fill(running_max.begin(), running_max.end(), kNegInf);
      std::fill(running_sum.begin(), running_sum.end(), 0.0);
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t visited = 0;

      for (std::uint32_t j : sel.blocks(r, g)) {
        const Span span = block_span(sel, j, pos);
        for (std::size_t k0 = span.begin; k0 < span.end; k0 += bk) {
          const std::size_t width = std::min(bk, span.end - k0);
          visited += width;
          for (std::size_t hh = 0; hh < G; ++hh) {
            const std::size_t h = g * G + hh;
            const double* qr = q.row(r, h);
            double* lrow = logits.data() + hh * bk;
            double tile_max = kNegInf;
            for (std::size_t c = 0; c < width; ++c) {
              lrow[c] = detail::dot(qr, k.row(k0 + c, g), d) * scale;
              tile_max = std::max(tile_max, lrow[c]);
            }
            const double new_max = std::max(running_max[hh], tile_max);
            const double correction = std::exp(running_max[hh] - new_max);
            double* a = acc.data() + hh * d;
            detail::scale(correction, a, d);
            double tile_sum = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const double p = std::exp(lrow[c] - new_max);
              tile_sum += p;
              detail::axpy(p, v.row(k0 + c, g), a, d);
            }
            running_sum[hh] = correction * running_sum[hh] + tile_sum;
            running_max[hh] = new_max;
          }
        }
      }
      if (visited == 0) {
        throw ShapeError("row " + std::to_string(r) + ", group " + std::to_string(g) +
                         " has no visible token");
      }
      lanes += visited * G;
      for (std::size_t hh = 0; hh < G; ++hh) {
        const std::size_t h = g * G + hh;
        double* o = out.data() + (r * s.query_heads + h) * d;
        const double* a = acc.data() + hh * d;
        for (std::size_t i = 0; i < d; ++i) o[i] = a[i] / running_sum[hh];
        lse[r * s.query_heads + h] = running_max[hh] + std::log(running_sum[hh]);
      }
    }
    charge(counter, Stage::kSparse, 2 * d * lanes, lanes);
  });

  return {Tensor({s.q_len, s.query_heads, d}, std::move(out), q.precision()),
          Tensor({s.q_len, s.query_heads}, std::move(lse), q.precision())};
}

Gradients sparse_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                          const BlockSelection& sel, const Tensor& d_out,
                          const AttentionConfig& cfg, const AttentionResult* forward) {
  const AttentionShape s = check_sparse(q, k, v, sel, cfg);
  if (d_out.shape() != q.shape()) throw ShapeError("dO must have the shape of Q");
  AttentionResult fresh;
  if (forward == nullptr) {
    fresh = sparse_forward(q, k, v, sel, cfg);
    forward = &fresh;
  }
  if (forward->output.shape() != q.shape() || forward->lse.rank() != 2 ||
      forward->lse.extent(0) != s.q_len || forward->lse.extent(1) != s.query_heads) {
    throw ShapeError("forward result does not match Q");
  }
  const std::size_t d = s.head_dim;
  const std::size_t G = s.group_size;
  const double scale = cfg.logit_scale();

  // delta[r, h] = dO . O
  std::vector<double> delta(s.q_len * s.query_heads);
  for (std::size_t r = 0; r < s.q_len; ++r) {
    for (std::size_t h = 0; h < s.query_heads; ++h) {
      delta[r * s.query_heads + h] = detail::dot(d_out.row(r, h), forward->output.row(r, h), d);
    }
  }

  auto prob = [&](std::size_t r, std::size_t h, std::size_t t) {
    const std::size_t g = h / G;
    return std::exp(detail::dot(q.row(r, h), k.row(t, g), d) * scale -
                    forward->lse.at(r, h));
  };

  std::vector<double> dq(q.size(), 0.0);
  parallel_for(s.q_len, [&](std::size_t r) {
    const std::size_t pos = s.position(r);
    for (std::size_t h = 0; h < s.query_heads; ++h) {
      const std::size_t g = h / G;
      const double* dor = d_out.row(r, h);
      const double dlt = delta[r * s.query_heads + h];
      double* dqr = dq.data() + (r * s.query_heads + h) * d;
      for (std::uint32_t j : sel.blocks(r, g)) {
        const Span span = block_span(sel, j, pos);
        for (std::size_t t = span.begin; t < span.end; ++t) {
          const double p = prob(r, h, t);
          const double ds = p * (detail::dot(dor, v.row(t, g), d) - dlt) * scale;
          detail::axpy(ds, k.row(t, g), dqr, d);
        }
      }
    }
  });

  // Rows that selected each (group, block), in increasing row order.
  const std::size_t n_blocks = sel.block_count();
  std::vector<std::vector<std::uint32_t>> visitors(s.kv_heads * n_blocks);
  for (std::size_t r = 0; r < s.q_len; ++r) {
    for (std::size_t g = 0; g < s.kv_heads; ++g) {
      for (std::uint32_t j : sel.blocks(r, g)) {
        visitors[g * n_blocks + j].push_back(static_cast<std::uint32_t>(r));
      }
    }
  }

  std::vector<double> dk(k.size(), 0.0);
  std::vector<double> dv(v.size(), 0.0);
  parallel_for(s.kv_heads * n_blocks, [&](std::size_t item) {
    const std::size_t g = item / n_blocks;
    const auto j = static_cast<std::uint32_t>(item % n_blocks);
    for (std::uint32_t r : visitors[item]) {
      const Span span = block_span(sel, j, s.position(r));
      for (std::size_t hh = 0; hh < G; ++hh) {
        const std::size_t h = g * G + hh;
        const double* qr = q.row(r, h);
        const double* dor = d_out.row(r, h);
        const double dlt = delta[r * s.query_heads + h];
        for (std::size_t t = span.begin; t < span.end; ++t) {
          const double p = prob(r, h, t);
          const double ds = p * (detail::dot(dor, v.row(t, g), d) - dlt) * scale;
          detail::axpy(ds, qr, dk.data() + (t * s.kv_heads + g) * d, d);
          detail::axpy(p, dor, dv.data() + (t * s.kv_heads + g) * d, d);
        }
      }
    }
  });

  return {Tensor(q.shape(), std::move(dq), q.precision()),
          Tensor(k.shape(), std::move(dk), q.precision()),
          Tensor(v.shape(), std::move(dv), q.precision())};
}

AttentionResult masked_naive_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const BlockSelection& sel, const AttentionConfig& cfg) {
  const AttentionShape s = check_sparse(q, k, v, sel, cfg);
  const std::size_t d = s.head_dim;
  const double scale = cfg.logit_scale();
  std::vector<double> out(s.q_len * s.query_heads * d, 0.0);
  std::vector<double> lse(s.q_len * s.query_heads, 0.0);
  std::vector<double> logits(s.kv_len);

  for (std::size_t r = 0; r < s.q_len; ++r) {
    for (std::size_t h = 0; h < s.query_heads; ++h) {
      const std::size_t g = h / s.group_size;
      double max_logit = kNegInf;
      for (std::size_t t = 0; t < s.kv_len; ++t) {
        logits[t] = token_visible(sel, r, g, t)
                        ? detail::dot(q.row(r, h), k.row(t, g), d) * scale
                        : kNegInf;
        max_logit = std::max(max_logit, logits[t]);
      }
      if (max_logit == kNegInf) {
        throw ShapeError("row " + std::to_string(r) + " has no visible token");
      }
      double denom = 0.0;
      for (std::size_t t = 0; t < s.kv_len; ++t) denom += std::exp(logits[t] - max_logit);
      double* o = out.data() + (r * s.query_heads + h) * d;
      for (std::size_t t = 0; t < s.kv_len; ++t) {
        const double p = std::exp(logits[t] - max_logit) / denom;
        if (p != 0.0) detail::axpy(p, v.row(t, g), o, d);
      }
      lse[r * s.query_heads + h] = max_logit + std::log(denom);
    }
  }
  return {Tensor({s.q_len, s.query_heads, d}, std::move(out), q.precision()),
          Tensor({s.q_len, s.query_heads}, std::move(lse), q.precision())};
}

std::uint64_t sparse_mac_count(const BlockSelection& sel, std::size_t query_heads,
                               std::size_t head_dim) {
  if (sel.groups() == 0 || query_heads % sel.groups() != 0) {
    throw ShapeError("query heads are not a multiple of the selection groups");
  }
  const std::uint64_t G = query_heads / sel.groups();
  std::uint64_t tokens = 0;
  for (std::size_t r = 0; r < sel.rows(); ++r) {
    for (std::size_t g = 0; g < sel.groups(); ++g) tokens += sel.visible_tokens(r, g);
  }
  return tokens * G * 2 * head_dim;
}

}  // namespace swattn
