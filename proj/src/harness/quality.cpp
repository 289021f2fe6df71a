// SPDX-License-Identifier: Apache-2.0
#include "swattn/harness/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "kernel_util.hpp"
#include "swattn/attention_shape.hpp"
#include "swattn/harness/fixtures.hpp"
#include "swattn/parallel.hpp"
#include "swattn/random.hpp"

namespace swattn::harness {

namespace {

std::vector<std::uint32_t> topk_part(const BlockSelection& sel, std::size_t r, std::size_t g) {
  const auto& u = sel.usage(r, g);
  const std::size_t own = sel.position(r) / sel.block_size();
  const std::size_t local_begin = own + 1 - u.local;
  std::vector<std::uint32_t> out;
  for (std::uint32_t j : sel.blocks(r, g)) {
    if (j >= u.init && j < local_begin) out.push_back(j);
  }
  return out;
}

}  // namespace

AttentionConfig quality_config() {
  AttentionConfig cfg = AttentionConfig::pooling_profile(64);
  cfg.with_heads(4, 2, 32);
  cfg.n = 4096;
  cfg.init_blocks = 1;
  cfg.local_blocks = 4;
  cfg.topk_blocks = 8;
  cfg.window = 128;
  return cfg;
}

BlockSelection random_baseline(const BlockSelection& exact, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::uint32_t>> lists(exact.rows() * exact.groups());
  std::vector<std::uint32_t> pool;
  for (std::size_t r = 0; r < exact.rows(); ++r) {
    const std::size_t own = exact.position(r) / exact.block_size();
    for (std::size_t g = 0; g < exact.groups(); ++g) {
      const auto& u = exact.usage(r, g);
      auto& l = lists[r * exact.groups() + g];
      const std::size_t local_begin = own + 1 - u.local;
      for (std::uint32_t j = 0; j < u.init; ++j) l.push_back(j);
      for (std::size_t j = local_begin; j <= own; ++j) l.push_back(static_cast<std::uint32_t>(j));
      pool.clear();
      for (std::size_t j = u.init; j < local_begin; ++j) pool.push_back(static_cast<std::uint32_t>(j));
      // Partial Fisher-Yates.
      const std::size_t take = std::min<std::size_t>(u.topk, pool.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        l.push_back(pool[i]);
      }
    }
  }
  return BlockSelection::from_lists(exact.seq_len(), exact.block_size(), exact.groups(),
                                    std::move(lists));
}

double attention_mass_recall(const Tensor& q, const Tensor& k, const BlockSelection& sel,
                             const AttentionConfig& cfg) {
  const AttentionShape s = check_qk_shapes(q, k, cfg);
  const double scale = cfg.logit_scale();
  const std::size_t B = sel.block_size();
  std::vector<double> per_row(s.q_len, 0.0);

  parallel_for(s.q_len, [&](std::size_t r) {
    const std::size_t pos = s.position(r);
    std::vector<double> logits(pos + 1);
    std::vector<std::uint8_t> chosen(pos / B + 1);
    double row_total = 0.0;
    for (std::size_t g = 0; g < s.kv_heads; ++g) {
      std::fill(chosen.begin(), chosen.end(), 0);
      for (std::uint32_t j : sel.blocks(r, g)) chosen[j] = 1;
      for (std::size_t hh = 0; hh < s.group_size; ++hh) {
        const double* qr = q.row(r, g * s.group_size + hh);
        double m = detail::kNegInf;
        for (std::size_t t = 0; t <= pos; ++t) {
          logits[t] = detail::dot(qr, k.row(t, g), s.head_dim) * scale;
          m = std::max(m, logits[t]);
        }
        double all = 0.0;
        double hit = 0.0;
        for (std::size_t t = 0; t <= pos; ++t) {
          const double p = std::exp(logits[t] - m);
          all += p;
          if (chosen[t / B]) hit += p;
        }
        row_total += hit / all;
      }
    }
    per_row[r] = row_total;
  });
  const double sum = std::accumulate(per_row.begin(), per_row.end(), 0.0);
  return sum / static_cast<double>(s.q_len * s.query_heads);
}

QualityReport run_selection_quality(const AttentionConfig& cfg, std::uint64_t seed,
                                    Precision precision) {
  validate_config(cfg);
  const Qkv in = random_qkv(cfg, cfg.n, seed, precision);
  const BlockSelection exact = select_blocks(in.q, in.k, cfg, SelectionMode::kExact);
  const BlockSelection approx = select_blocks(in.q, in.k, cfg, SelectionMode::kApprox);
  const BlockSelection random = random_baseline(exact, seed ^ 0x5eedba5e11e5ULL);

  QualityReport rep;
  rep.n = cfg.n;
  rep.seed = seed;
  rep.topk_blocks = cfg.topk_blocks;
  rep.exact_recall = attention_mass_recall(in.q, in.k, exact, cfg);
  rep.approx_recall = attention_mass_recall(in.q, in.k, approx, cfg);
  rep.random_recall = attention_mass_recall(in.q, in.k, random, cfg);

  rep.row_overlap.resize(exact.rows());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < exact.rows(); ++r) {
    double row_sum = 0.0;
    std::size_t groups = 0;
    for (std::size_t g = 0; g < exact.groups(); ++g) {
      const auto a = topk_part(exact, r, g);
      if (a.empty()) continue;
      const auto b = topk_part(approx, r, g);
      std::vector<std::uint32_t> common;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      row_sum += static_cast<double>(common.size()) / static_cast<double>(a.size());
      ++groups;
    }
    if (groups == 0) continue;
    rep.row_overlap[r] = row_sum / static_cast<double>(groups);
    total += *rep.row_overlap[r];
    ++counted;
  }
  rep.mean_overlap = counted == 0 ? 1.0 : total / static_cast<double>(counted);
  return rep;
}

void to_json(nlohmann::json& j, const QualityReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& o : report.row_overlap) rows.push_back(o ? nlohmann::json(*o) : nlohmann::json());
  j = {{"n", report.n},
       {"seed", report.seed},
       {"k_top", report.topk_blocks},
       {"recall",
        {{"exact", report.exact_recall},
         {"approx", report.approx_recall},
         {"random", report.random_recall}}},
       {"mean_topk_overlap", report.mean_overlap},
       {"row_topk_overlap", rows}};
}

}  // namespace swattn::harness
