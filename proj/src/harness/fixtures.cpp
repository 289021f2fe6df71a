// SPDX-License-Identifier: Apache-2.0
#include "swattn/harness/fixtures.hpp"

#include <filesystem>

#include "core/byte_io.hpp"
#include "swattn/block_selection.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/random.hpp"
#include "swattn/tensor_io.hpp"

namespace swattn::harness {

namespace fs = std::filesystem;

Qkv random_qkv(const AttentionConfig& cfg, std::size_t n, std::uint64_t seed,
               Precision precision, std::size_t q_len) {
  const std::size_t rows = q_len == 0 ? n : q_len;
  return {seeded_random_tensor({rows, cfg.query_heads, cfg.head_dim}, 3 * seed, {}, precision),
          seeded_random_tensor({n, cfg.kv_heads, cfg.head_dim}, 3 * seed + 1, {}, precision),
          seeded_random_tensor({n, cfg.kv_heads, cfg.head_dim}, 3 * seed + 2, {}, precision)};
}

AttentionConfig golden_config() {
  AttentionConfig cfg = AttentionConfig::small_profile();
  cfg.with_heads(4, 2, 8);
  cfg.n = 64;
  return cfg;
}

std::vector<std::string> write_fixtures(const std::string& dir, std::uint64_t seed,
                                        Precision precision) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto save = [&](const Tensor& t, const char* name) {
    const std::string path = (fs::path(dir) / name).string();
    save_tensor(t, path);
    written.push_back(path);
  };

  const AttentionConfig golden = golden_config();
  const Qkv g = random_qkv(golden, golden.n, seed, precision);
  save(g.q, "q.bin");
  save(g.k, "k.bin");
  save(g.v, "v.bin");
  const AttentionResult dense = naive_gqa_forward(g.q, g.k, g.v, true, golden);
  save(dense.output, "dense_out.bin");
  save(dense.lse, "dense_lse.bin");

  const AttentionConfig small = AttentionConfig::small_profile();
  const Qkv s = random_qkv(small, small.n, seed, precision);
  const std::string sel_path = (fs::path(dir) / "selection.bin").string();
  save_selection(select_blocks(s.q, s.k, small, SelectionMode::kApprox), sel_path);
  written.push_back(sel_path);
  return written;
}

std::string write_text_file(const std::string& dir, const std::string& name,
                            const std::string& text) {
  if (!dir.empty()) fs::create_directories(dir);
  const std::string path = (fs::path(dir) / name).string();
  detail::write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
  return path;
}

}  // namespace swattn::harness
