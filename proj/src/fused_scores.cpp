// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "kernel_util.hpp"
#include "swattn/block_selection.hpp"
#include "swattn/errors.hpp"
#include "swattn/parallel.hpp"

namespace swattn {

using detail::kNegInf;

namespace {

struct FusedGeometry {
  std::size_t q_len;
  std::size_t offset;
  std::size_t heads;
  std::size_t groups;
  std::size_t group_size;
  std::size_t head_dim;
  double scale;
};

FusedGeometry check_fused(const Tensor& q, const CompressedKeys& ck, const AttentionConfig& cfg,
                          TileShape tiles) {
  if (tiles.query == 0 || tiles.key == 0) throw ShapeError("tile sizes must be positive");
  if (q.rank() != 3 || q.extent(1) != cfg.query_heads || q.extent(2) != cfg.head_dim) {
    throw ShapeError("Q does not match the configured query heads and head dim");
  }
  if (cfg.kv_heads == 0 || cfg.query_heads % cfg.kv_heads != 0 ||
      ck.kv_heads != cfg.kv_heads || ck.head_dim != cfg.head_dim) {
    throw ShapeError("compressed keys do not match the configured KV heads");
  }
  if (q.extent(0) > ck.seq_len) throw ShapeError("more query rows than pooled tokens");
  return {q.extent(0),
          ck.seq_len - q.extent(0),
          cfg.query_heads,
          cfg.kv_heads,
          cfg.query_heads / cfg.kv_heads,
          cfg.head_dim,
          cfg.compressed_logit_scale()};
}

// Per-worker state for one (group, query tile) item.
class TileWorker {
 public:
  TileWorker(const FusedGeometry& geo, const Tensor& q, TileShape tiles, std::size_t group,
             std::size_t q0)
      : geo_(geo),
        q_(q),
        bq_(tiles.query),
        bk_(tiles.key),
        group_(group),
        q0_(q0),
        rows_(std::min(tiles.query, geo.q_len - q0)),
        logits_(geo.group_size * bq_ * bk_),
        max_(geo.group_size * bq_, kNegInf),
        sum_(geo.group_size * bq_, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t scratch_elements() const { return logits_.size() + bq_ * bk_; }
  std::size_t position(std::size_t rr) const { return geo_.offset + q0_ + rr; }

  // Fills the G x bq x bk logit tile for entries [k0, k0 + bk) of `ck`; lanes
  // a row may not see are -inf. `limit[rr]` is the visible entry count of row
  // rr. Returns the number of computed lanes.
  std::uint64_t fill_logits(const CompressedKeys& ck, std::size_t k0,
                            const std::vector<std::size_t>& limit) {
    std::uint64_t lanes = 0;
    for (std::size_t hh = 0; hh < geo_.group_size; ++hh) {
      const std::size_t h = group_ * geo_.group_size + hh;
      for (std::size_t rr = 0; rr < bq_; ++rr) {
        double* row = logits_.data() + (hh * bq_ + rr) * bk_;
        const std::size_t lim = rr < rows_ ? limit[rr] : 0;
        for (std::size_t c = 0; c < bk_; ++c) {
          const std::size_t e = k0 + c;
          if (e < lim) {
            row[c] = detail::dot(q_.row(q0_ + rr, h), ck.entry(e, group_), geo_.head_dim) *
                     geo_.scale;
            ++lanes;
          } else {
            row[c] = kNegInf;
          }
        }
      }
    }
    return lanes;
  }

  // Online log-sum-exp update from the current logit tile.
  void accumulate_lse() {
    for (std::size_t hh = 0; hh < geo_.group_size; ++hh) {
      for (std::size_t rr = 0; rr < rows_; ++rr) {
        const std::size_t s = hh * bq_ + rr;
        const double* row = logits_.data() + s * bk_;
        const double new_max = std::max(max_[s], *std::max_element(row, row + bk_));
        if (new_max == kNegInf) continue;
        double tile_sum = 0.0;
        for (std::size_t c = 0; c < bk_; ++c) tile_sum += std::exp(row[c] - new_max);
        sum_[s] = sum_[s] * std::exp(max_[s] - new_max) + tile_sum;
        max_[s] = new_max;
      }
    }
  }

  double lse(std::size_t hh, std::size_t rr) const {
    const std::size_t s = hh * bq_ + rr;
    return max_[s] == kNegInf ? kNegInf : max_[s] + std::log(sum_[s]);
  }

  // Replaces the normalizer of row rr with an exact one streamed over `ck`.
  std::uint64_t exact_lse_for_row(const CompressedKeys& ck, std::size_t rr, std::size_t visible) {
    for (std::size_t hh = 0; hh < geo_.group_size; ++hh) {
      const std::size_t h = group_ * geo_.group_size + hh;
      double m = kNegInf;
      double l = 0.0;
      for (std::size_t e = 0; e < visible; ++e) {
        const double x =
            detail::dot(q_.row(q0_ + rr, h), ck.entry(e, group_), geo_.head_dim) * geo_.scale;
        const double nm = std::max(m, x);
        l = l * std::exp(m - nm) + std::exp(x - nm);
        m = nm;
      }
      max_[hh * bq_ + rr] = m;
      sum_[hh * bq_ + rr] = l;
    }
    return visible * geo_.group_size;
  }

  // Normalizes the current logit tile by the stored log-sum-exp and writes
  // the head-group sum for entries [k0, k0 + bk) into `out`.
  void write_group_sums(std::size_t k0, std::size_t cols, std::vector<double>& out) {
    std::vector<double>& tile = group_tile_;
    tile.assign(bq_ * bk_, 0.0);
    for (std::size_t hh = 0; hh < geo_.group_size; ++hh) {
      for (std::size_t rr = 0; rr < rows_; ++rr) {
        const double norm = lse(hh, rr);
        if (norm == kNegInf) continue;
        const double* row = logits_.data() + (hh * bq_ + rr) * bk_;
        double* dst = tile.data() + rr * bk_;
        for (std::size_t c = 0; c < bk_; ++c) dst[c] += std::exp(row[c] - norm);
      }
    }
    const std::size_t width = std::min(bk_, cols - k0);
    for (std::size_t rr = 0; rr < rows_; ++rr) {
      double* dst = out.data() + ((q0_ + rr) * geo_.groups + group_) * cols + k0;
      std::copy_n(tile.data() + rr * bk_, width, dst);
    }
  }

 private:
  const FusedGeometry& geo_;
  const Tensor& q_;
  std::size_t bq_;
  std::size_t bk_;
  std::size_t group_;
  std::size_t q0_;
  std::size_t rows_;
  std::vector<double> logits_;
  std::vector<double> max_;
  std::vector<double> sum_;
  std::vector<double> group_tile_;
};

std::vector<std::size_t> visible_limits(const TileWorker& w, const CompressedKeys& ck) {
  std::vector<std::size_t> limit(w.rows());
  for (std::size_t rr = 0; rr < w.rows(); ++rr) limit[rr] = ck.visible_count(w.position(rr));
  return limit;
}

std::size_t tile_count(const std::vector<std::size_t>& limit, std::size_t bk) {
  const std::size_t most = limit.empty() ? 0 : *std::max_element(limit.begin(), limit.end());
  return detail::ceil_div(most, bk);
}

ScoreMatrix run_two_pass(const Tensor& q, const CompressedKeys& c1, const CompressedKeys* c2,
                         const AttentionConfig& cfg, TileShape tiles, OpCounter* counter) {
  const FusedGeometry geo = check_fused(q, c1, cfg, tiles);
  if (c2 != nullptr && (c2->kv_heads != c1.kv_heads || c2->head_dim != c1.head_dim ||
                        c2->seq_len != c1.seq_len)) {
    throw ShapeError("coarse keys do not match stage-1 keys");
  }
  const std::size_t cols = c1.count();
  const std::size_t q_tiles = detail::ceil_div(geo.q_len, tiles.query);
  const std::uint64_t d = geo.head_dim;

  std::vector<double> out(geo.q_len * geo.groups * cols, 0.0);
  std::vector<std::uint8_t> empty(geo.q_len);
  for (std::size_t r = 0; r < geo.q_len; ++r) {
    empty[r] = c1.visible_count(geo.offset + r) == 0 ? 1 : 0;
  }

  parallel_for(geo.groups * q_tiles, [&](std::size_t item) {
    const std::size_t group = item / q_tiles;
    const std::size_t q0 = (item % q_tiles) * tiles.query;
    TileWorker w(geo, q, tiles, group, q0);
    note_scratch(counter, w.scratch_elements());

    // Pass 1: normalizer.
    const CompressedKeys& norm_keys = c2 != nullptr ? *c2 : c1;
    const auto norm_limit = visible_limits(w, norm_keys);
    std::uint64_t lanes = 0;
    for (std::size_t kt = 0, n = tile_count(norm_limit, tiles.key); kt < n; ++kt) {
      lanes += w.fill_logits(norm_keys, kt * tiles.key, norm_limit);
      w.accumulate_lse();
    }
    const auto limit = visible_limits(w, c1);
    if (c2 != nullptr) {
      std::uint64_t fallback = 0;
      for (std::size_t rr = 0; rr < w.rows(); ++rr) {
        if (norm_limit[rr] == 0 && limit[rr] > 0) {
          lanes += w.exact_lse_for_row(c1, rr, limit[rr]);
          ++fallback;
        }
      }
      if (fallback != 0 && counter != nullptr) counter->add_fallback_rows(fallback);
    }
    charge(counter, Stage::kSelectionPass1, lanes * d, lanes);

    // Pass 2: normalize stage-1 scores and sum over the head group.
    lanes = 0;
    for (std::size_t kt = 0, n = tile_count(limit, tiles.key); kt < n; ++kt) {
      lanes += w.fill_logits(c1, kt * tiles.key, limit);
      w.write_group_sums(kt * tiles.key, cols, out);
    }
    charge(counter, Stage::kSelectionPass2, lanes * d, lanes);
  });

  ScoreMatrix sm;
  sm.scores = Tensor({geo.q_len, geo.groups, cols}, std::move(out), q.precision());
  sm.kind = c2 != nullptr ? ScoreKind::kSharedApprox : ScoreKind::kShared;
  sm.empty_rows = std::move(empty);
  sm.seq_len = c1.seq_len;
  sm.query_offset = geo.offset;
  return sm;
}

}  // namespace

ScoreMatrix fused_shared_scores_exact(const Tensor& q, const CompressedKeys& c1,
                                      const AttentionConfig& cfg, TileShape tiles,
                                      OpCounter* counter) {
  return run_two_pass(q, c1, nullptr, cfg, tiles, counter);
}

ScoreMatrix fused_shared_scores_approx(const Tensor& q, const CompressedKeys& c1,
                                       const CompressedKeys& c2, const AttentionConfig& cfg,
                                       TileShape tiles, OpCounter* counter) {
  return run_two_pass(q, c1, &c2, cfg, tiles, counter);
}

}  // namespace swattn
