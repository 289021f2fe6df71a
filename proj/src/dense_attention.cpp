// SPDX-License-Identifier: Apache-2.0
#include "swattn/dense_attention.hpp"

#include <algorithm>
#include <cmath>

#include "kernel_util.hpp"
#include "swattn/errors.hpp"
#include "swattn/parallel.hpp"

namespace swattn {

using detail::kNegInf;

namespace {

std::size_t visible_keys(const AttentionShape& s, std::size_t row, bool causal) {
  return causal ? s.position(row) + 1 : s.kv_len;
}

}  // namespace

AttentionResult naive_gqa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  bool causal, const AttentionConfig& cfg,
                                  OpCounter* counter, std::vector<double>* row_sums) {
  const AttentionShape s = check_qkv_shapes(q, k, v, cfg);
  const std::size_t d = s.head_dim;
  const double scale = cfg.logit_scale();

  std::vector<double> out(s.q_len * s.query_heads * d, 0.0);
  std::vector<double> lse(s.q_len * s.query_heads, 0.0);
  if (row_sums != nullptr) row_sums->assign(s.q_len * s.query_heads, 0.0);

  parallel_for(s.q_len, [&](std::size_t r) {
    const std::size_t n_vis = visible_keys(s, r, causal);
    const std::size_t G = s.group_size;
    // Each K and V row is read once per KV group and used by all G heads.
    std::vector<double> logits(G * n_vis);
    std::vector<double> max_logit(G, kNegInf);
    std::vector<double> denom(G, 0.0);
    for (std::size_t g = 0; g < s.kv_heads; ++g) {
      std::fill(max_logit.begin(), max_logit.end(), kNegInf);
      std::fill(denom.begin(), denom.end(), 0.0);
      for (std::size_t t = 0; t < n_vis; ++t) {
        const double* kt = k.row(t, g);
        for (std::size_t hh = 0; hh < G; ++hh) {
          const double x = detail::dot(q.row(r, g * G + hh), kt, d) * scale;
          logits[hh * n_vis + t] = x;
          max_logit[hh] = std::max(max_logit[hh], x);
        }
      }
      for (std::size_t hh = 0; hh < G; ++hh) {
        double* row = logits.data() + hh * n_vis;
        for (std::size_t t = 0; t < n_vis; ++t) {
          row[t] = std::exp(row[t] - max_logit[hh]);
          denom[hh] += row[t];
        }
      }
      double* o = out.data() + (r * s.query_heads + g * G) * d;
      for (std::size_t t = 0; t < n_vis; ++t) {
        const double* vt = v.row(t, g);
        for (std::size_t hh = 0; hh < G; ++hh) {
          detail::axpy(logits[hh * n_vis + t] / denom[hh], vt, o + hh * d, d);
        }
      }
      for (std::size_t hh = 0; hh < G; ++hh) {
        const std::size_t h = g * G + hh;
        lse[r * s.query_heads + h] = max_logit[hh] + std::log(denom[hh]);
        if (row_sums != nullptr) {
          double prob_sum = 0.0;
          for (std::size_t t = 0; t < n_vis; ++t) prob_sum += logits[hh * n_vis + t] / denom[hh];
          (*row_sums)[r * s.query_heads + h] = prob_sum;
        }
      }
    }
    charge(counter, Stage::kDense, 2 * d * n_vis * s.query_heads, n_vis * s.query_heads);
  });

  return {Tensor({s.q_len, s.query_heads, d}, std::move(out), q.precision()),
          Tensor({s.q_len, s.query_heads}, std::move(lse), q.precision())};
}

AttentionResult tiled_gqa_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                  bool causal, const AttentionConfig& cfg, TileShape tiles,
                                  OpCounter* counter) {
  const AttentionShape s = check_qkv_shapes(q, k, v, cfg);
  if (tiles.query == 0 || tiles.key == 0) throw ShapeError("tile sizes must be positive");
  const std::size_t d = s.head_dim;
  const std::size_t bq = tiles.query;
  const std::size_t bk = tiles.key;
  const double scale = cfg.logit_scale();
  const std::size_t q_tiles = detail::ceil_div(s.q_len, bq);

  std::vector<double> out(s.q_len * s.query_heads * d, 0.0);
  std::vector<double> lse(s.q_len * s.query_heads, 0.0);

  parallel_for(s.query_heads * q_tiles, [&](std::size_t item) {
    const std::size_t h = item / q_tiles;
    const std::size_t g = h / s.group_size;
    const std::size_t q0 = (item % q_tiles) * bq;
    const std::size_t rows = std::min(bq, s.q_len - q0);

    std::vector<double> scores(bq * bk);
    std::vector<double> running_max(bq, kNegInf);
    std::vector<double> running_sum(bq, 0.0);
    std::vector<double> acc(bq * d, 0.0);
    note_scratch(counter, scores.size());

    const std::size_t key_end =
        causal ? s.position(q0 + rows - 1) + 1 : s.kv_len;
    const std::size_t k_tiles = detail::ceil_div(key_end, bk);
    std::uint64_t lanes = 0;

    for (std::size_t kt = 0; kt < k_tiles; ++kt) {
      const std::size_t k0 = kt * bk;
      for (std::size_t rr = 0; rr < bq; ++rr) {
        const std::size_t r = q0 + rr;
        const std::size_t limit = rr < rows ? (causal ? s.position(r) + 1 : s.kv_len) : 0;
        double* srow = scores.data() + rr * bk;
        for (std::size_t c = 0; c < bk; ++c) {
          const std::size_t t = k0 + c;
          if (t < limit) {
            srow[c] = detail::dot(q.row(r, h), k.row(t, g), d) * scale;
            ++lanes;
          } else {
            srow[c] = kNegInf;
          }
        }
      }
      for (std::size_t rr = 0; rr < rows; ++rr) {
        double* srow = scores.data() + rr * bk;
        const double tile_max = *std::max_element(srow, srow + bk);
        const double new_max = std::max(running_max[rr], tile_max);
        if (new_max == kNegInf) continue;
        const double correction = std::exp(running_max[rr] - new_max);
        double* a = acc.data() + rr * d;
        detail::scale(correction, a, d);
        double tile_sum = 0.0;
        for (std::size_t c = 0; c < bk; ++c) {
          const double p = std::exp(srow[c] - new_max);
          if (p == 0.0) continue;
          tile_sum += p;
          detail::axpy(p, v.row(k0 + c, g), a, d);
        }
        running_sum[rr] = correction * running_sum[rr] + tile_sum;
        running_max[rr] = new_max;
      }
    }

    for (std::size_t rr = 0; rr < rows; ++rr) {
      const std::size_t r = q0 + rr;
      double* o = out.data() + (r * s.query_heads + h) * d;
      const double* a = acc.data() + rr * d;
      for (std::size_t i = 0; i < d; ++i) o[i] = a[i] / running_sum[rr];
      lse[r * s.query_heads + h] = running_max[rr] + std::log(running_sum[rr]);
    }
    charge(counter, Stage::kDense, 2 * d * lanes, lanes);
  });

  return {Tensor({s.q_len, s.query_heads, d}, std::move(out), q.precision()),
          Tensor({s.q_len, s.query_heads}, std::move(lse), q.precision())};
}

Gradients naive_gqa_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& d_out, bool causal, const AttentionConfig& cfg) {
  const AttentionShape s = check_qkv_shapes(q, k, v, cfg);
  if (d_out.shape() != q.shape()) throw ShapeError("dO must have the shape of Q");
  const std::size_t d = s.head_dim;
  const double scale = cfg.logit_scale();

  std::vector<double> dq(q.size(), 0.0);
  std::vector<double> dk(k.size(), 0.0);
  std::vector<double> dv(v.size(), 0.0);
  std::vector<double> probs;
  std::vector<double> o(d);

  for (std::size_t r = 0; r < s.q_len; ++r) {
    const std::size_t n_vis = visible_keys(s, r, causal);
    probs.resize(n_vis);
    for (std::size_t h = 0; h < s.query_heads; ++h) {
      const std::size_t g = h / s.group_size;
      const double* qr = q.row(r, h);
      const double* dor = d_out.row(r, h);
      double max_logit = kNegInf;
      for (std::size_t t = 0; t < n_vis; ++t) {
        probs[t] = detail::dot(qr, k.row(t, g), d) * scale;
        max_logit = std::max(max_logit, probs[t]);
      }
      double denom = 0.0;
      for (std::size_t t = 0; t < n_vis; ++t) {
        probs[t] = std::exp(probs[t] - max_logit);
        denom += probs[t];
      }
      std::fill(o.begin(), o.end(), 0.0);
      for (std::size_t t = 0; t < n_vis; ++t) {
        probs[t] /= denom;
        detail::axpy(probs[t], v.row(t, g), o.data(), d);
      }
      const double delta = detail::dot(dor, o.data(), d);
      double* dqr = dq.data() + (r * s.query_heads + h) * d;
      for (std::size_t t = 0; t < n_vis; ++t) {
        const double dp = detail::dot(dor, v.row(t, g), d);
        const double ds = probs[t] * (dp - delta) * scale;
        detail::axpy(ds, k.row(t, g), dqr, d);
        detail::axpy(ds, qr, dk.data() + (t * s.kv_heads + g) * d, d);
        detail::axpy(probs[t], dor, dv.data() + (t * s.kv_heads + g) * d, d);
      }
    }
  }
  return {Tensor(q.shape(), std::move(dq), q.precision()),
          Tensor(k.shape(), std::move(dk), q.precision()),
          Tensor(v.shape(), std::move(dv), q.precision())};
}

std::uint64_t dense_mac_count(const AttentionShape& shape, bool causal) {
  std::uint64_t pairs;
  if (causal) {
    const std::uint64_t hi = shape.kv_len;
    const std::uint64_t lo = shape.query_offset();
    pairs = (hi * (hi + 1) - lo * (lo + 1)) / 2;
  } else {
    pairs = static_cast<std::uint64_t>(shape.q_len) * shape.kv_len;
  }
  return pairs * shape.query_heads * 2 * shape.head_dim;
}

}  // namespace swattn
