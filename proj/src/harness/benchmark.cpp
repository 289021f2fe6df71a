// SPDX-License-Identifier: Apache-2.0
#include "swattn/harness/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>

#include <nlohmann/json.hpp>

#include "swattn/block_selection.hpp"
#include "swattn/compression.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/harness/fixtures.hpp"
#include "swattn/sparse_attention.hpp"

namespace swattn::harness {

namespace {

struct Timed {
  OpTally tally;
  double ms;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

BenchRecord measure(BenchMode mode, std::size_t n, const AttentionConfig& cfg,
                    std::size_t reps, std::uint64_t dense_macs,
                    const std::function<void(OpCounter&)>& body) {
  BenchRecord rec;
  rec.mode = mode;
  rec.n = n;
  rec.block_size = cfg.block_size;
  rec.topk_blocks = cfg.topk_blocks;
  rec.group_size = cfg.group_size;
  rec.head_dim = cfg.head_dim;
  std::vector<double> times;
  for (std::size_t i = 0; i < std::max<std::size_t>(reps, 1); ++i) {
    OpCounter counter;
    const auto start = std::chrono::steady_clock::now();
    body(counter);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    const OpTally t = counter.snapshot();
    if (i == 0) {
      rec.tally = t;
    } else if (!(t == rec.tally)) {
      rec.counts_stable = false;
    }
  }
  rec.wall_ms = median(std::move(times));
  const OpCounts total = rec.tally.total();
  rec.mac_count = total.macs;
  rec.exp_count = total.exps;
  rec.speedup_counts =
      rec.mac_count == 0 ? 0.0 : static_cast<double>(dense_macs) / static_cast<double>(rec.mac_count);
  return rec;
}

}  // namespace

const char* to_string(BenchMode m) noexcept {
  switch (m) {
    case BenchMode::kDenseNaive:
      return "dense-naive";
    case BenchMode::kDenseTiled:
      return "dense-tiled";
    case BenchMode::kSelectExact:
      return "select-exact";
    case BenchMode::kSelectApprox:
      return "select-approx";
    case BenchMode::kSparse:
      return "sparse";
  }
  return "unknown";
}

std::optional<BenchMode> parse_bench_mode(const std::string& s) {
  for (BenchMode m : {BenchMode::kDenseNaive, BenchMode::kDenseTiled, BenchMode::kSelectExact,
                      BenchMode::kSelectApprox, BenchMode::kSparse}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

const char* to_string(BenchPhase p) noexcept {
  return p == BenchPhase::kDecode ? "decode" : "prefill";
}

std::optional<BenchPhase> parse_bench_phase(const std::string& s) {
  if (s == "decode") return BenchPhase::kDecode;
  if (s == "prefill") return BenchPhase::kPrefill;
  return std::nullopt;
}

const BenchRecord* BenchReport::find(BenchMode mode, std::size_t n) const {
  for (const auto& r : records) {
    if (r.mode == mode && r.n == n) return &r;
  }
  return nullptr;
}

std::optional<double> BenchReport::pass1_ratio(std::size_t n) const {
  const BenchRecord* exact = find(BenchMode::kSelectExact, n);
  const BenchRecord* approx = find(BenchMode::kSelectApprox, n);
  if (exact == nullptr || approx == nullptr) return std::nullopt;
  const std::uint64_t denom = exact->tally[Stage::kSelectionPass1].macs;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(approx->tally[Stage::kSelectionPass1].macs) /
         static_cast<double>(denom);
}

BenchReport run_bench(const AttentionConfig& cfg_in, const std::vector<std::size_t>& sizes,
                      const std::vector<BenchMode>& modes, const BenchOptions& options) {
  BenchReport report;
  report.phase = options.phase;
  report.cfg = cfg_in;
  for (std::size_t n : sizes) {
    AttentionConfig cfg = cfg_in;
    cfg.n = n;
    validate_config(cfg);
    const std::size_t q_len = options.phase == BenchPhase::kDecode ? 1 : n;
    const Qkv in = random_qkv(cfg, n, options.seed, options.precision, q_len);
    const AttentionShape shape = check_qkv_shapes(in.q, in.k, in.v, cfg);
    const std::uint64_t dense_macs = dense_mac_count(shape, true);

    const CompressedKeys c1 = mean_pool_keys(in.k, cfg.c1_length, cfg.c1_stride);
    const CompressedKeys c2 = mean_pool_keys(in.k, cfg.c2_length, cfg.c2_stride);
    std::optional<BlockSelection> selection;

    for (BenchMode mode : modes) {
      std::function<void(OpCounter&)> body;
      switch (mode) {
        case BenchMode::kDenseNaive:
          body = [&](OpCounter& c) { naive_gqa_forward(in.q, in.k, in.v, true, cfg, &c); };
          break;
        case BenchMode::kDenseTiled:
          body = [&](OpCounter& c) { tiled_gqa_forward(in.q, in.k, in.v, true, cfg, {}, &c); };
          break;
        case BenchMode::kSelectExact:
          body = [&](OpCounter& c) { fused_shared_scores_exact(in.q, c1, cfg, {}, &c); };
          break;
        case BenchMode::kSelectApprox:
          body = [&](OpCounter& c) { fused_shared_scores_approx(in.q, c1, c2, cfg, {}, &c); };
          break;
        case BenchMode::kSparse:
          if (!selection) selection = select_blocks(in.q, in.k, cfg, SelectionMode::kApprox);
          body = [&](OpCounter& c) { sparse_forward(in.q, in.k, in.v, *selection, cfg, &c); };
          break;
      }
      report.records.push_back(measure(mode, n, cfg, options.reps, dense_macs, body));
    }
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  char line[512];
  for (const auto& r : report.records) {
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%zu,%zu,%zu,%llu,%llu,%.3f,%.6f\n",
                  to_string(r.mode), r.n, r.block_size, r.topk_blocks, r.group_size, r.head_dim,
                  static_cast<unsigned long long>(r.mac_count),
                  static_cast<unsigned long long>(r.exp_count), r.wall_ms, r.speedup_counts);
    out += line;
  }
  return out;
}

void to_json(nlohmann::json& j, const BenchReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json stages = nlohmann::json::object();
    for (std::size_t s = 0; s < kStageCount; ++s) {
      const auto stage = static_cast<Stage>(s);
      stages[to_string(stage)] = {{"macs", r.tally[stage].macs}, {"exps", r.tally[stage].exps}};
    }
    records.push_back({{"mode", to_string(r.mode)},
                       {"n", r.n},
                       {"B", r.block_size},
                       {"k_top", r.topk_blocks},
                       {"G", r.group_size},
                       {"d_h", r.head_dim},
                       {"mac_count", r.mac_count},
                       {"exp_count", r.exp_count},
                       {"wall_ms", r.wall_ms},
                       {"speedup_counts", r.speedup_counts},
                       {"stages", stages},
                       {"fallback_rows", r.tally.fallback_rows},
                       {"peak_scratch", r.tally.peak_scratch},
                       {"counts_stable", r.counts_stable}});
  }
  nlohmann::json ratios = nlohmann::json::object();
  std::vector<std::size_t> sizes;
  for (const auto& r : report.records) {
    if (std::find(sizes.begin(), sizes.end(), r.n) == sizes.end()) sizes.push_back(r.n);
  }
  for (std::size_t n : sizes) {
    if (auto ratio = report.pass1_ratio(n)) ratios[std::to_string(n)] = *ratio;
  }
  j = {{"phase", to_string(report.phase)},
       {"config", report.cfg},
       {"records", records},
       {"pass1_ratio_approx_over_exact", ratios}};
}

}  // namespace swattn::harness
