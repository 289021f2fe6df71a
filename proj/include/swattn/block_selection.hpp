// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swattn/compression.hpp"
#include "swattn/config.hpp"
#include "swattn/dense_attention.hpp"
#include "swattn/op_counter.hpp"
#include "swattn/tensor.hpp"

namespace swattn {

/**
 * Visible key blocks per (query row, KV group).
 *
 * Blocks are 0-based; block j holds tokens [j*B, (j+1)*B). Every list is
 * strictly increasing and never names a block past the query's own block
 * b = position / B. Rows are query rows; row r sits at absolute position
 * query_offset + r.
 */
class BlockSelection {
 public:
  struct Usage {
    std::uint32_t init = 0;
    std::uint32_t local = 0;
    std::uint32_t topk = 0;
  };

  BlockSelection() = default;

  // Builds from explicit per-(row, group) lists, laid out row-major
  // (row * groups + group). Lists are sorted and deduplicated; a block past
  // the row's own block throws ShapeError. Usage counts are left at zero.
  static BlockSelection from_lists(std::size_t seq_len, std::size_t block_size,
                                   std::size_t groups,
                                   std::vector<std::vector<std::uint32_t>> lists);

  // Every block from 0 to the row's own block.
  static BlockSelection all_blocks(std::size_t q_len, std::size_t seq_len,
                                   std::size_t block_size, std::size_t groups);

  std::size_t rows() const noexcept { return offsets_.empty() ? 0 : (offsets_.size() - 1) / groups_; }
  std::size_t groups() const noexcept { return groups_; }
  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t seq_len() const noexcept { return seq_len_; }
  std::size_t query_offset() const noexcept { return seq_len_ - rows(); }
  std::size_t position(std::size_t row) const noexcept { return query_offset() + row; }
  std::size_t block_count() const noexcept { return (seq_len_ + block_size_ - 1) / block_size_; }

  std::span<const std::uint32_t> blocks(std::size_t row, std::size_t group) const;
  const Usage& usage(std::size_t row, std::size_t group) const { return usage_[row * groups_ + group]; }

  // Tokens of the row's visible set: selected blocks cut at the row's
  // position and at the sequence end.
  std::size_t visible_tokens(std::size_t row, std::size_t group) const;

  // Same geometry and block lists. Usage counts are not compared; they are
  // not stored in selection files.
  friend bool operator==(const BlockSelection& a, const BlockSelection& b) {
    return a.seq_len_ == b.seq_len_ && a.block_size_ == b.block_size_ &&
           a.groups_ == b.groups_ && a.offsets_ == b.offsets_ && a.indices_ == b.indices_;
  }

 private:
  friend BlockSelection build_block_sets(const ScoreMatrix&, const AttentionConfig&);
  friend BlockSelection load_selection(const std::string&);

  static BlockSelection assemble(std::size_t seq_len, std::size_t block_size, std::size_t groups,
                                 const std::vector<std::vector<std::uint32_t>>& lists,
                                 std::vector<Usage> usage);

  std::size_t seq_len_ = 0;
  std::size_t block_size_ = 1;
  std::size_t groups_ = 1;
  std::vector<std::uint32_t> offsets_;  // rows * groups + 1 entries
  std::vector<std::uint32_t> indices_;
  std::vector<Usage> usage_;
};

// Per row and group: the first N_init blocks, the N_local blocks ending at
// the row's own block, and the k_top highest scoring remaining blocks. Top-k
// candidates are blocks before the local span that are not initial blocks
// and have a score column; higher score wins, ties go to the lower index.
// Rows flagged empty in `cmp` get initial and local blocks only.
BlockSelection build_block_sets(const ScoreMatrix& cmp, const AttentionConfig& cfg);

// First (row, group) whose window [pos - w + 1, pos] is not inside its
// selected blocks.
struct WindowViolation {
  std::size_t row;
  std::size_t group;
};
std::optional<WindowViolation> find_window_violation(const BlockSelection& sel, std::size_t window);
bool window_coverage_check(const BlockSelection& sel, std::size_t window);

/**
 * Group-summed stage-1 scores computed in two passes over key tiles, with
 * the head-group summation done per tile.
 *
 * Work items are (KV group, query tile of `tiles.query` rows). Pass 1
 * streams key tiles of `tiles.key` entries and keeps a running log-sum-exp
 * per (row, head). Pass 2 recomputes the stage-1 logits tile by tile,
 * normalizes them by that log-sum-exp, sums over the G heads, and writes the
 * tiles.query x tiles.key group tile. Per-head scores exist only inside one
 * G x tiles.query x tiles.key scratch tile.
 *
 * Causal: an entry is visible to position p only if its span ends at or
 * before p.
 */
ScoreMatrix fused_shared_scores_exact(const Tensor& q, const CompressedKeys& c1,
                                      const AttentionConfig& cfg, TileShape tiles,
                                      OpCounter* counter = nullptr);

// As above, but pass 1 runs over the coarser keys `c2`, so pass 2 divides
// by the coarse normalizer. Rows are not guaranteed to sum to G. A row that
// sees stage-1 entries but no coarse entry uses the exact pass for its
// normalizer and is counted in OpTally::fallback_rows.
ScoreMatrix fused_shared_scores_approx(const Tensor& q, const CompressedKeys& c1,
                                       const CompressedKeys& c2, const AttentionConfig& cfg,
                                       TileShape tiles, OpCounter* counter = nullptr);

enum class SelectionMode : std::uint8_t {
  kExact,       // per-head scores, then head-group sum
  kFusedExact,  // two-pass fused kernel, exact normalizer
  kApprox,      // two-pass fused kernel, coarse normalizer
};

const char* to_string(SelectionMode m) noexcept;
std::optional<SelectionMode> parse_selection_mode(const std::string& s);

// Full pipeline: mean-pool K, group-summed scores by `mode`, max-pool to
// ceil(n / B) block columns, then build_block_sets. Always causal.
BlockSelection select_blocks(const Tensor& q, const Tensor& k, const AttentionConfig& cfg,
                             SelectionMode mode, OpCounter* counter = nullptr,
                             TileShape tiles = {});

// Selection file: core header with rank 2, extents [rows, groups], tag
// kSelectionTag; then u64 block_size, u64 seq_len; then for each (row, group)
// in row-major order a u32 count followed by that many u32 block indices.
inline constexpr std::uint8_t kSelectionTag = 2;
void save_selection(const BlockSelection& sel, const std::string& path);
BlockSelection load_selection(const std::string& path);

}  // namespace swattn
