// SPDX-License-Identifier: Apache-2.0
#include "swattn/harness/correctness.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "swattn/block_selection.hpp"
#include "swattn/compression.hpp"
#include "swattn/harness/fixtures.hpp"
#include "swattn/random.hpp"
#include "swattn/sparse_attention.hpp"
#include "swattn/switchable.hpp"

namespace swattn::harness {

namespace {

constexpr double kGradientTolerance = 1e-5;

CheckResult make_check(std::string name, std::size_t n, double error, double tolerance) {
  return {std::move(name), n, error, tolerance, error <= tolerance};
}

double flag_error(bool ok) { return ok ? 0.0 : 1.0; }

Tensor perturbed(const Tensor& t) {
  std::vector<double> vals = t.to_vector();
  vals[0] += 1e-3;
  return Tensor(t.shape(), std::move(vals), Precision::kF64);
}

double result_error(const AttentionResult& a, const AttentionResult& ref) {
  return std::max(max_relative_error(a.output, ref.output), max_relative_error(a.lse, ref.lse));
}

// Random per-group selection that always keeps the row's own block.
BlockSelection random_selection(std::size_t n, std::size_t block, std::size_t groups,
                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::uint32_t>> lists(n * groups);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t own = r / block;
    for (std::size_t g = 0; g < groups; ++g) {
      auto& l = lists[r * groups + g];
      l.push_back(static_cast<std::uint32_t>(own));
      for (std::size_t j = 0; j < own; ++j) {
        if (rng.uniform() < 0.5) l.push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  return BlockSelection::from_lists(n, block, groups, std::move(lists));
}

void check_size(const CorrectnessOptions& opt, std::size_t n, CorrectnessReport& report) {
  AttentionConfig cfg = opt.cfg;
  cfg.n = n;
  const double tol = forward_tolerance(opt.precision);
  const std::uint64_t seed = opt.seed * 1000003 + n;
  const Qkv in = random_qkv(cfg, n, seed, opt.precision);
  auto add = [&](std::string name, double err, double t) {
    report.checks.push_back(make_check(std::move(name), n, err, t));
  };

  // Dense.
  const AttentionResult naive = naive_gqa_forward(in.q, in.k, in.v, true, cfg);
  AttentionResult tiled = tiled_gqa_forward(in.q, in.k, in.v, true, cfg, {16, 32});
  if (opt.inject_perturbation) tiled.output = perturbed(tiled.output);
  add("dense_tiled_vs_naive", result_error(tiled, naive), tol);

  // Group scores and selection.
  const CompressedKeys c1 = mean_pool_keys(in.k, cfg.c1_length, cfg.c1_stride);
  const ScoreMatrix direct =
      head_group_sum(compressed_scores(in.q, c1, cfg, true), cfg.group_size);
  const ScoreMatrix fused = fused_shared_scores_exact(in.q, c1, cfg, {8, 16});
  add("fused_exact_vs_direct", max_abs_error(fused.scores, direct.scores), tol);

  const BlockSelection exact = select_blocks(in.q, in.k, cfg, SelectionMode::kExact);
  const BlockSelection fused_sel =
      select_blocks(in.q, in.k, cfg, SelectionMode::kFusedExact, nullptr, {8, 16});
  add("selection_exact_vs_fused", flag_error(exact == fused_sel), 0.0);

  const BlockSelection approx = select_blocks(in.q, in.k, cfg, SelectionMode::kApprox);
  add("window_coverage", flag_error(window_coverage_check(approx, cfg.window)), 0.0);

  // Sparse.
  add("sparse_vs_masked_oracle",
      result_error(sparse_forward(in.q, in.k, in.v, approx, cfg),
                   masked_naive_oracle(in.q, in.k, in.v, approx, cfg)),
      tol);
  const BlockSelection full = BlockSelection::all_blocks(n, n, cfg.block_size, cfg.kv_heads);
  add("sparse_full_vs_dense", result_error(sparse_forward(in.q, in.k, in.v, full, cfg), naive),
      tol);

  if (n <= visible_token_budget(cfg)) {
    SwitchPolicy sparse_policy;
    sparse_policy.forced_mode = AttentionMode::kSparse;
    const SwitchResult s = attend(in.q, in.k, in.v, cfg, sparse_policy);
    const SwitchResult d = attend(in.q, in.k, in.v, cfg);
    add("switch_sparse_vs_dense",
        d.mode == AttentionMode::kDense ? result_error(s.result, d.result) : 1.0, tol);
  }

  if (n <= 16) {
    const Qkv g = random_qkv(cfg, n, seed + 17, Precision::kF64);
    const Tensor d_out =
        seeded_random_tensor({n, cfg.query_heads, cfg.head_dim}, seed + 19, {}, Precision::kF64);
    const Gradients dense = naive_gqa_backward(g.q, g.k, g.v, d_out, true, cfg);
    add("dense_backward_fd",
        finite_difference_check(
            [&](const Tensor& q, const Tensor& k, const Tensor& v) {
              return naive_gqa_forward(q, k, v, true, cfg).output;
            },
            dense, g.q, g.k, g.v, d_out)
            .max(),
        kGradientTolerance);

    const BlockSelection sel = random_selection(n, 4, cfg.kv_heads, seed + 23);
    AttentionConfig sparse_cfg = cfg;
    sparse_cfg.block_size = 4;
    const Gradients sparse = sparse_backward(g.q, g.k, g.v, sel, d_out, sparse_cfg);
    add("sparse_backward_fd",
        finite_difference_check(
            [&](const Tensor& q, const Tensor& k, const Tensor& v) {
              return sparse_forward(q, k, v, sel, sparse_cfg).output;
            },
            sparse, g.q, g.k, g.v, d_out)
            .max(),
        kGradientTolerance);
  }
}

double weighted_sum(const Tensor& out, const Tensor& d_out) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.at(i) * d_out.at(i);
  return s;
}

double gradient_error(const Tensor& analytic, const std::vector<double>& numeric, double floor) {
  double err = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    err = std::max(err, std::abs(analytic.at(i) - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return err / scale;
}

}  // namespace

double forward_tolerance(Precision p) { return p == Precision::kF64 ? 1e-10 : 1e-4; }

bool CorrectnessReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

CorrectnessReport run_correctness(const CorrectnessOptions& options) {
  CorrectnessReport report;
  if (options.sizes.empty()) {
    report.warnings.push_back("no checks run: size list is empty");
    return report;
  }
  for (std::size_t n : options.sizes) {
    if (n == 0) {
      report.warnings.push_back("skipped size 0");
      continue;
    }
    check_size(options, n, report);
  }
  return report;
}

void to_json(nlohmann::json& j, const CorrectnessReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"n", c.n},
                      {"max_error", c.max_error},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  }
  j = {{"passed", report.passed()}, {"checks", checks}, {"warnings", report.warnings}};
}

double GradientCheck::max() const { return std::max({dq, dk, dv}); }

GradientCheck finite_difference_check(const ForwardFn& forward, const Gradients& analytic,
                                      const Tensor& q, const Tensor& k, const Tensor& v,
                                      const Tensor& d_out, double step, double floor) {
  std::vector<double> inputs[3] = {q.to_vector(), k.to_vector(), v.to_vector()};
  const Tensor* shapes[3] = {&q, &k, &v};
  auto eval = [&]() {
    const Tensor tq(q.shape(), inputs[0], Precision::kF64);
    const Tensor tk(k.shape(), inputs[1], Precision::kF64);
    const Tensor tv(v.shape(), inputs[2], Precision::kF64);
    return weighted_sum(forward(tq, tk, tv), d_out);
  };
  double errs[3];
  const Tensor* grads[3] = {&analytic.dq, &analytic.dk, &analytic.dv};
  for (int which = 0; which < 3; ++which) {
    std::vector<double> numeric(shapes[which]->size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double saved = inputs[which][i];
      inputs[which][i] = saved + step;
      const double plus = eval();
      inputs[which][i] = saved - step;
      const double minus = eval();
      inputs[which][i] = saved;
      numeric[i] = (plus - minus) / (2 * step);
    }
    errs[which] = gradient_error(*grads[which], numeric, floor);
  }
  return {errs[0], errs[1], errs[2]};
}

}  // namespace swattn::harness
