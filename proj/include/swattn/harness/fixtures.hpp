// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "swattn/config.hpp"
#include "swattn/tensor.hpp"

namespace swattn::harness {

struct Qkv {
  Tensor q;  // [q_len, h_q, d_h]
  Tensor k;  // [n, h_kv, d_h]
  Tensor v;  // [n, h_kv, d_h]
};

// Standard-normal Q, K, V for cfg's head geometry. Q, K and V draw from
// seeds 3*seed, 3*seed + 1 and 3*seed + 2. `q_len` defaults to n; a shorter
// Q holds the last q_len tokens (seeded from the same stream, so it equals
// the tail of the full-length Q only when q_len == n).
Qkv random_qkv(const AttentionConfig& cfg, std::size_t n, std::uint64_t seed,
               Precision precision = Precision::kF32, std::size_t q_len = 0);

// Golden instance geometry: n = 64, h_q = 4, h_kv = 2, d_h = 8.
AttentionConfig golden_config();

// Writes q.bin, k.bin, v.bin for the golden geometry, the dense causal
// output and lse (dense_out.bin, dense_lse.bin), and the block selection of
// the small profile at n = 256 (selection.bin). Returns the written paths.
std::vector<std::string> write_fixtures(const std::string& dir, std::uint64_t seed,
                                        Precision precision);

// Creates `dir` if needed, then writes `text` to dir/name via temp + rename.
std::string write_text_file(const std::string& dir, const std::string& name,
                            const std::string& text);

}  // namespace swattn::harness
