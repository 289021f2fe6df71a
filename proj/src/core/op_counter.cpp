// SPDX-License-Identifier: Apache-2.0
#include "swattn/op_counter.hpp"

namespace swattn {

const char* to_string(Stage s) noexcept {
  switch (s) {
    case Stage::kDense:
      return "dense";
    case Stage::kSelectionPass1:
      return "selection_pass1";
    case Stage::kSelectionPass2:
      return "selection_pass2";
    case Stage::kSparse:
      return "sparse";
  }
  return "unknown";
}

OpCounts OpTally::total() const {
  OpCounts sum;
  for (const auto& s : stages) sum += s;
  return sum;
}

void OpCounter::add(Stage stage, std::uint64_t macs, std::uint64_t exps) noexcept {
  auto& slot = slots_[static_cast<std::size_t>(stage)];
  slot.macs.fetch_add(macs, std::memory_order_relaxed);
  slot.exps.fetch_add(exps, std::memory_order_relaxed);
}

void OpCounter::add_fallback_rows(std::uint64_t rows) noexcept {
  fallback_rows_.fetch_add(rows, std::memory_order_relaxed);
}

void OpCounter::note_scratch(std::size_t elements) noexcept {
  std::size_t seen = peak_scratch_.load(std::memory_order_relaxed);
  while (seen < elements &&
         !peak_scratch_.compare_exchange_weak(seen, elements, std::memory_order_relaxed)) {
  }
}

void OpCounter::reset() noexcept {
  for (auto& slot : slots_) {
    slot.macs.store(0, std::memory_order_relaxed);
    slot.exps.store(0, std::memory_order_relaxed);
  }
  fallback_rows_.store(0, std::memory_order_relaxed);
  peak_scratch_.store(0, std::memory_order_relaxed);
}

OpTally OpCounter::snapshot() const noexcept {
  OpTally t;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    t.stages[i].macs = slots_[i].macs.load(std::memory_order_relaxed);
    t.stages[i].exps = slots_[i].exps.load(std::memory_order_relaxed);
  }
  t.fallback_rows = fallback_rows_.load(std::memory_order_relaxed);
  t.peak_scratch = peak_scratch_.load(std::memory_order_relaxed);
  return t;
}

}  // namespace swattn
