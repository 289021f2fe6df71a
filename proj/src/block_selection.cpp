// SPDX-License-Identifier: Apache-2.0
#include "swattn/block_selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "core/byte_io.hpp"
#include "kernel_util.hpp"
#include "swattn/errors.hpp"
#include "swattn/parallel.hpp"
#include "swattn/tensor_io.hpp"

namespace swattn {

BlockSelection BlockSelection::assemble(std::size_t seq_len, std::size_t block_size,
                                        std::size_t groups,
                                        const std::vector<std::vector<std::uint32_t>>& lists,
                                        std::vector<Usage> usage) {
  if (block_size == 0 || groups == 0) throw ShapeError("block size and groups must be positive");
  if (lists.size() % groups != 0) throw ShapeError("list count is not a multiple of groups");
  const std::size_t rows = lists.size() / groups;
  if (rows > seq_len) throw ShapeError("more selection rows than tokens");

  BlockSelection sel;
  sel.seq_len_ = seq_len;
  sel.block_size_ = block_size;
  sel.groups_ = groups;
  sel.offsets_.reserve(lists.size() + 1);
  sel.offsets_.push_back(0);
  for (const auto& l : lists) {
    sel.indices_.insert(sel.indices_.end(), l.begin(), l.end());
    sel.offsets_.push_back(static_cast<std::uint32_t>(sel.indices_.size()));
  }
  sel.usage_ = usage.empty() ? std::vector<Usage>(lists.size()) : std::move(usage);
  return sel;
}

BlockSelection BlockSelection::from_lists(std::size_t seq_len, std::size_t block_size,
                                          std::size_t groups,
                                          std::vector<std::vector<std::uint32_t>> lists) {
  if (block_size == 0 || groups == 0) throw ShapeError("block size and groups must be positive");
  const std::size_t rows = lists.size() / groups;
  if (rows > seq_len) throw ShapeError("more selection rows than tokens");
  const std::size_t offset = seq_len - rows;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    auto& l = lists[i];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    const std::size_t own_block = (offset + i / groups) / block_size;
    if (!l.empty() && l.back() > own_block) {
      throw ShapeError("row " + std::to_string(i / groups) + " selects future block " +
                       std::to_string(l.back()));
    }
  }
  return assemble(seq_len, block_size, groups, lists, {});
}

BlockSelection BlockSelection::all_blocks(std::size_t q_len, std::size_t seq_len,
                                          std::size_t block_size, std::size_t groups) {
  if (q_len > seq_len) throw ShapeError("more selection rows than tokens");
  std::vector<std::vector<std::uint32_t>> lists(q_len * groups);
  for (std::size_t r = 0; r < q_len; ++r) {
    const std::size_t own_block = (seq_len - q_len + r) / block_size;
    for (std::size_t g = 0; g < groups; ++g) {
      auto& l = lists[r * groups + g];
      l.resize(own_block + 1);
      std::iota(l.begin(), l.end(), 0u);
    }
  }
  return from_lists(seq_len, block_size, groups, std::move(lists));
}

std::span<const std::uint32_t> BlockSelection::blocks(std::size_t row, std::size_t group) const {
  const std::size_t i = row * groups_ + group;
  return {indices_.data() + offsets_[i], indices_.data() + offsets_[i + 1]};
}

std::size_t BlockSelection::visible_tokens(std::size_t row, std::size_t group) const {
  const std::size_t end = std::min(position(row) + 1, seq_len_);
  std::size_t total = 0;
  for (std::uint32_t j : blocks(row, group)) {
    const std::size_t begin = std::size_t{j} * block_size_;
    if (begin < end) total += std::min(begin + block_size_, end) - begin;
  }
  return total;
}

BlockSelection build_block_sets(const ScoreMatrix& cmp, const AttentionConfig& cfg) {
  const std::size_t rows = cmp.rows();
  const std::size_t groups = cmp.planes();
  const std::size_t cols = cmp.cols();
  const std::size_t B = cfg.block_size;
  if (B == 0) throw ShapeError("block size must be positive");

  std::vector<std::vector<std::uint32_t>> lists(rows * groups);
  std::vector<BlockSelection::Usage> usage(rows * groups);

  parallel_for(rows, [&](std::size_t r) {
    const std::size_t own = (cmp.query_offset + r) / B;
    const std::size_t init_end = std::min(cfg.init_blocks, own + 1);
    const std::size_t local_begin = own + 1 > cfg.local_blocks ? own + 1 - cfg.local_blocks : 0;
    const std::size_t cand_end = std::min(local_begin, cols);

    std::vector<std::uint32_t> candidates;
    for (std::size_t g = 0; g < groups; ++g) {
      candidates.clear();
      if (!cmp.row_empty(r)) {
        for (std::size_t j = init_end; j < cand_end; ++j) {
          candidates.push_back(static_cast<std::uint32_t>(j));
        }
      }
      const std::size_t take = std::min(cfg.topk_blocks, candidates.size());
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                        candidates.end(), [&](std::uint32_t a, std::uint32_t b) {
                          const double sa = cmp.at(r, g, a);
                          const double sb = cmp.at(r, g, b);
                          return sa != sb ? sa > sb : a < b;
                        });

      auto& l = lists[r * groups + g];
      for (std::size_t j = 0; j < init_end; ++j) l.push_back(static_cast<std::uint32_t>(j));
      for (std::size_t j = local_begin; j <= own; ++j) l.push_back(static_cast<std::uint32_t>(j));
      l.insert(l.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());

      usage[r * groups + g] = {static_cast<std::uint32_t>(init_end),
                               static_cast<std::uint32_t>(own + 1 - local_begin),
                               static_cast<std::uint32_t>(take)};
    }
  });

  return BlockSelection::assemble(cmp.seq_len, B, groups, lists, std::move(usage));
}

std::optional<WindowViolation> find_window_violation(const BlockSelection& sel,
                                                     std::size_t window) {
  const std::size_t B = sel.block_size();
  for (std::size_t r = 0; r < sel.rows(); ++r) {
    const std::size_t pos = sel.position(r);
    const std::size_t lo = pos + 1 > window ? pos + 1 - window : 0;
    for (std::size_t g = 0; g < sel.groups(); ++g) {
      const auto blocks = sel.blocks(r, g);
      for (std::size_t j = lo / B; j <= pos / B; ++j) {
        if (!std::binary_search(blocks.begin(), blocks.end(), static_cast<std::uint32_t>(j))) {
          return WindowViolation{r, g};
        }
      }
    }
  }
  return std::nullopt;
}

bool window_coverage_check(const BlockSelection& sel, std::size_t window) {
  return !find_window_violation(sel, window).has_value();
}

const char* to_string(SelectionMode m) noexcept {
  switch (m) {
    case SelectionMode::kExact:
      return "exact";
    case SelectionMode::kFusedExact:
      return "fused-exact";
    case SelectionMode::kApprox:
      return "approx";
  }
  return "unknown";
}

std::optional<SelectionMode> parse_selection_mode(const std::string& s) {
  if (s == "exact") return SelectionMode::kExact;
  if (s == "fused-exact") return SelectionMode::kFusedExact;
  if (s == "approx") return SelectionMode::kApprox;
  return std::nullopt;
}

BlockSelection select_blocks(const Tensor& q, const Tensor& k, const AttentionConfig& cfg,
                             SelectionMode mode, OpCounter* counter, TileShape tiles) {
  validate_config(cfg);
  const CompressedKeys c1 = mean_pool_keys(k, cfg.c1_length, cfg.c1_stride);
  ScoreMatrix shared;
  switch (mode) {
    case SelectionMode::kExact:
      shared = head_group_sum(compressed_scores(q, c1, cfg, true, ScoreKind::kC1, counter),
                              cfg.group_size);
      break;
    case SelectionMode::kFusedExact:
      shared = fused_shared_scores_exact(q, c1, cfg, tiles, counter);
      break;
    case SelectionMode::kApprox: {
      const CompressedKeys c2 = mean_pool_keys(k, cfg.c2_length, cfg.c2_stride);
      shared = fused_shared_scores_approx(q, c1, c2, cfg, tiles, counter);
      break;
    }
  }
  const std::size_t blocks = detail::ceil_div(k.extent(0), cfg.block_size);
  return build_block_sets(max_pool_scores(shared, cfg.cmp_length, cfg.cmp_stride, blocks), cfg);
}

void save_selection(const BlockSelection& sel, const std::string& path) {
  detail::ByteWriter out;
  detail::write_header(out, {sel.rows(), sel.groups()}, kSelectionTag);
  out.put_u64(sel.block_size());
  out.put_u64(sel.seq_len());
  for (std::size_t r = 0; r < sel.rows(); ++r) {
    for (std::size_t g = 0; g < sel.groups(); ++g) {
      const auto blocks = sel.blocks(r, g);
      out.put_u32(static_cast<std::uint32_t>(blocks.size()));
      for (std::uint32_t j : blocks) out.put_u32(j);
    }
  }
  detail::write_file_atomic(path, out.bytes());
}

BlockSelection load_selection(const std::string& path) {
  detail::ByteReader in(detail::read_file(path));
  std::vector<std::uint64_t> extents;
  const std::uint8_t tag = detail::read_header(in, extents);
  if (tag != kSelectionTag) {
    throw FormatError(FormatError::Kind::kUnknownPrecision,
                      "not a selection file (tag " + std::to_string(tag) + ")");
  }
  if (extents.size() != 2) throw FormatError(FormatError::Kind::kMalformedHeader, "selection rank must be 2");
  const std::uint64_t block_size = in.get_u64();
  const std::uint64_t seq_len = in.get_u64();
  if (block_size == 0 || extents[1] == 0 || extents[0] > seq_len) {
    throw FormatError(FormatError::Kind::kMalformedHeader, "inconsistent selection header");
  }
  in.set_overrun_kind(FormatError::Kind::kTruncatedPayload);
  std::vector<std::vector<std::uint32_t>> lists(extents[0] * extents[1]);
  for (auto& l : lists) {
    const std::uint32_t count = in.get_u32();
    if (count > in.remaining() / 4) {
      throw FormatError(FormatError::Kind::kTruncatedPayload, "payload is truncated");
    }
    l.resize(count);
    for (auto& j : l) j = in.get_u32();
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatError::Kind::kMalformedHeader, "trailing bytes after payload");
  }
  try {
    return BlockSelection::from_lists(seq_len, block_size, extents[1], std::move(lists));
  } catch (const ShapeError& e) {
    throw FormatError(FormatError::Kind::kMalformedHeader, e.what());
  }
}

}  // namespace swattn
