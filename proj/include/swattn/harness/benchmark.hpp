// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "swattn/config.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn::harness {

enum class BenchMode : std::uint8_t {
  kDenseNaive,
  kDenseTiled,
  kSelectExact,   // two-pass fused kernel, exact normalizer
  kSelectApprox,  // two-pass fused kernel, coarse normalizer
  kSparse,        // block-sparse attention over the approximate selection
};

const char* to_string(BenchMode m) noexcept;
std::optional<BenchMode> parse_bench_mode(const std::string& s);

// Decode: one query at the last position against n keys. Prefill: n causal
// queries against n keys.
enum class BenchPhase : std::uint8_t { kDecode, kPrefill };

const char* to_string(BenchPhase p) noexcept;
std::optional<BenchPhase> parse_bench_phase(const std::string& s);

struct BenchOptions {
  BenchPhase phase = BenchPhase::kDecode;
  std::size_t reps = 5;
  std::uint64_t seed = 0;
  Precision precision = Precision::kF32;
};

struct BenchRecord {
  BenchMode mode = BenchMode::kDenseTiled;
  std::size_t n = 0;
  std::size_t block_size = 0;
  std::size_t topk_blocks = 0;
  std::size_t group_size = 0;
  std::size_t head_dim = 0;
  std::uint64_t mac_count = 0;
  std::uint64_t exp_count = 0;
  double wall_ms = 0.0;         // median over repetitions
  double speedup_counts = 0.0;  // dense causal MACs / mac_count
  OpTally tally;                // full per-stage counts of one repetition
  bool counts_stable = true;    // identical tallies on every repetition
};

struct BenchReport {
  BenchPhase phase = BenchPhase::kDecode;
  AttentionConfig cfg;
  std::vector<BenchRecord> records;

  const BenchRecord* find(BenchMode mode, std::size_t n) const;
  // Pass-1 MACs of select-approx over select-exact at n, when both ran.
  std::optional<double> pass1_ratio(std::size_t n) const;
};

// One record per (mode, n). Inputs are standard-normal Q/K/V drawn from
// options.seed. mac_count and exp_count sum every stage the mode charges.
BenchReport run_bench(const AttentionConfig& cfg, const std::vector<std::size_t>& sizes,
                      const std::vector<BenchMode>& modes, const BenchOptions& options);

inline constexpr const char* kBenchCsvHeader =
    "mode,n,B,k_top,G,d_h,mac_count,exp_count,wall_ms,speedup_counts";

std::string bench_csv(const BenchReport& report);
void to_json(nlohmann::json& j, const BenchReport& report);

}  // namespace swattn::harness
