// SPDX-License-Identifier: Apache-2.0
//
// swattn: correctness checks, benchmarks, selection-quality reports and
// fixture generation.
//
// Exit codes: 0 success, 1 tolerance breach, 2 usage, config or I/O error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "swattn/config.hpp"
#include "swattn/errors.hpp"
#include "swattn/harness/benchmark.hpp"
#include "swattn/harness/correctness.hpp"
#include "swattn/harness/fixtures.hpp"
#include "swattn/harness/quality.hpp"
#include "swattn/parallel.hpp"

namespace {

using namespace swattn;
using namespace swattn::harness;

constexpr int kExitOk = 0;
constexpr int kExitBreach = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-') throw UsageError("bad size '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw UsageError("precision must be f32 or f64, got '" + s + "'");
}

struct Common {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::string> sizes;
  std::optional<std::string> modes;
  std::optional<std::string> precision;
  std::size_t threads = 0;

  AttentionConfig config_or(const AttentionConfig& fallback) const {
    return config_path.empty() ? fallback : load_config(config_path);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--config", c.config_path, "AttentionConfig JSON file");
  app->add_option("--out", c.out_dir, "Output directory");
  app->add_option("--sizes", c.sizes, "Comma-separated sequence lengths");
  app->add_option("--modes", c.modes, "Comma-separated modes");
  app->add_option("--precision", c.precision, "Storage precision: f32 or f64");
  app->add_option("--threads", c.threads, "Worker threads (0 keeps the default)");
}

void print_path(const std::string& path) { std::cout << "wrote " << path << "\n"; }

int cmd_check(const Common& c, bool perturb) {
  CorrectnessOptions opt;
  opt.seed = c.seed;
  opt.cfg = c.config_or(AttentionConfig::small_profile());
  validate_config(opt.cfg);
  if (c.sizes) opt.sizes = parse_sizes(*c.sizes);
  if (c.precision) opt.precision = parse_precision(*c.precision);
  opt.inject_perturbation = perturb;

  const CorrectnessReport report = run_correctness(opt);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& chk : report.checks) {
    std::printf("%-4s %-26s n=%-6zu err=%.3e tol=%.1e\n", chk.passed ? "ok" : "FAIL",
                chk.name.c_str(), chk.n, chk.max_error, chk.tolerance);
  }
  const nlohmann::json j = report;
  print_path(write_text_file(c.out_dir, "correctness.json", j.dump(2) + "\n"));
  return report.passed() ? kExitOk : kExitBreach;
}

int cmd_bench(const Common& c, const std::string& phase, std::size_t reps) {
  const AttentionConfig cfg = c.config_or(AttentionConfig::long_context_default());
  std::vector<BenchMode> modes;
  for (const auto& m : split_list(c.modes.value_or("dense-tiled,select-exact,select-approx,sparse"))) {
    const auto parsed = parse_bench_mode(m);
    if (!parsed) throw UsageError("unknown mode '" + m + "'");
    modes.push_back(*parsed);
  }
  BenchOptions opt;
  opt.seed = c.seed;
  opt.reps = reps;
  if (c.precision) opt.precision = parse_precision(*c.precision);
  const auto parsed_phase = parse_bench_phase(phase);
  if (!parsed_phase) throw UsageError("phase must be decode or prefill");
  opt.phase = *parsed_phase;
  const std::vector<std::size_t> sizes =
      c.sizes ? parse_sizes(*c.sizes) : std::vector<std::size_t>{cfg.n};

  const BenchReport report = run_bench(cfg, sizes, modes, opt);
  const std::string csv = bench_csv(report);
  std::cout << csv;
  for (std::size_t n : sizes) {
    if (auto r = report.pass1_ratio(n)) {
      std::printf("pass-1 MAC ratio approx/exact at n=%zu: %.4f\n", n, *r);
    }
  }
  bool stable = true;
  for (const auto& r : report.records) stable = stable && r.counts_stable;
  const nlohmann::json j = report;
  print_path(write_text_file(c.out_dir, "bench.csv", csv));
  print_path(write_text_file(c.out_dir, "bench.json", j.dump(2) + "\n"));
  if (!stable) {
    std::cerr << "error: operation counts differed between repetitions\n";
    return kExitBreach;
  }
  return kExitOk;
}

int cmd_quality(const Common& c) {
  AttentionConfig cfg = c.config_or(quality_config());
  const Precision precision = c.precision ? parse_precision(*c.precision) : Precision::kF32;
  const std::vector<std::size_t> sizes =
      c.sizes ? parse_sizes(*c.sizes) : std::vector<std::size_t>{cfg.n};
  nlohmann::json reports = nlohmann::json::array();
  bool ok = true;
  for (std::size_t n : sizes) {
    cfg.n = n;
    const QualityReport rep = run_selection_quality(cfg, c.seed, precision);
    std::printf("n=%zu seed=%llu recall exact=%.4f approx=%.4f random=%.4f overlap=%.4f\n", n,
                static_cast<unsigned long long>(c.seed), rep.exact_recall, rep.approx_recall,
                rep.random_recall, rep.mean_overlap);
    ok = ok && rep.exact_recall > rep.random_recall;
    reports.push_back(rep);
  }
  const nlohmann::json j = {{"reports", reports}};
  print_path(write_text_file(c.out_dir, "quality.json", j.dump(2) + "\n"));
  if (!ok) std::cerr << "error: exact selection did not beat the random baseline\n";
  return ok ? kExitOk : kExitBreach;
}

int cmd_gen_fixtures(const Common& c) {
  const Precision precision = c.precision ? parse_precision(*c.precision) : Precision::kF32;
  for (const auto& path : write_fixtures(c.out_dir, c.seed, precision)) print_path(path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense and block-sparse attention: checks, benchmarks and fixtures"};
  app.require_subcommand(1);

  Common check_opts, bench_opts, quality_opts, fixture_opts;
  bool perturb = false;
  std::string phase = "decode";
  std::size_t reps = 5;

  auto* check = app.add_subcommand("check", "Run the cross-oracle correctness suite");
  add_common(check, check_opts);
  check->add_flag("--inject-perturbation", perturb,
                  "Perturb the tiled dense output so the suite must fail");

  auto* bench = app.add_subcommand("bench", "Count operations and time each mode");
  add_common(bench, bench_opts);
  bench->add_option("--phase", phase, "decode (one query at the last position) or prefill");
  bench->add_option("--reps", reps, "Timed repetitions per cell");

  auto* quality = app.add_subcommand("quality", "Selection recall and overlap report");
  add_common(quality, quality_opts);

  auto* fixtures = app.add_subcommand("gen-fixtures", "Write golden tensors and a selection");
  add_common(fixtures, fixture_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto run = [&](const Common& c, auto&& fn) -> int {
    if (c.threads != 0) set_num_threads(c.threads);
    try {
      return fn();
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << "I/O error: " << e.what() << "\n";
    } catch (const FormatError& e) {
      std::cerr << "I/O error: " << e.what() << "\n";
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
    return kExitUsage;
  };

  if (*check) return run(check_opts, [&] { return cmd_check(check_opts, perturb); });
  if (*bench) return run(bench_opts, [&] { return cmd_bench(bench_opts, phase, reps); });
  if (*quality) return run(quality_opts, [&] { return cmd_quality(quality_opts); });
  return run(fixture_opts, [&] { return cmd_gen_fixtures(fixture_opts); });
}
