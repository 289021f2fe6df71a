// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>

namespace swattn {

// Pipeline stage a count is charged to. Selection work is split by pass so
// the two-pass normalizer cost can be compared; a direct (unfused) score
// computation is a single pass and is charged to kSelectionPass1.
enum class Stage : std::uint8_t {
  kDense = 0,
  kSelectionPass1 = 1,
  kSelectionPass2 = 2,
  kSparse = 3,
};

inline constexpr std::size_t kStageCount = 4;

const char* to_string(Stage s) noexcept;

struct OpCounts {
  std::uint64_t macs = 0;
  std::uint64_t exps = 0;

  OpCounts& operator+=(const OpCounts& o) {
    macs += o.macs;
    exps += o.exps;
    return *this;
  }
  friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
  friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

// Plain-value copy of an OpCounter.
struct OpTally {
  std::array<OpCounts, kStageCount> stages{};
  std::uint64_t fallback_rows = 0;
  std::size_t peak_scratch = 0;

  const OpCounts& operator[](Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  OpCounts selection() const {
    return (*this)[Stage::kSelectionPass1] + (*this)[Stage::kSelectionPass2];
  }
  OpCounts total() const;
  friend bool operator==(const OpTally&, const OpTally&) = default;
};

/**
 * Deterministic tally of multiply-accumulates and exponentials.
 *
 * One MAC is one scalar multiply-add; a d_h-wide dot product is d_h MACs.
 * Only causally valid (unmasked) lanes are charged, so counts depend on the
 * input shape and the selection result, not on tile sizes or thread count.
 * The rescaling exponentials of online softmax are not charged.
 *
 * Kernels also report the largest per-worker scratch buffer they held
 * (`peak_scratch`, in scalar elements) and rows that fell back from the
 * approximate to the exact normalizer.
 *
 * Safe to update from several workers at once.
 */
class OpCounter {
 public:
  OpCounter() = default;
  OpCounter(const OpCounter&) = delete;
  OpCounter& operator=(const OpCounter&) = delete;

  void add(Stage stage, std::uint64_t macs, std::uint64_t exps) noexcept;
  void add_fallback_rows(std::uint64_t rows) noexcept;
  void note_scratch(std::size_t elements) noexcept;
  void reset() noexcept;

  OpTally snapshot() const noexcept;

 private:
  struct Slot {
    std::atomic<std::uint64_t> macs{0};
    std::atomic<std::uint64_t> exps{0};
  };
  std::array<Slot, kStageCount> slots_{};
  std::atomic<std::uint64_t> fallback_rows_{0};
  std::atomic<std::size_t> peak_scratch_{0};
};

// Null-safe helpers for kernels that take an optional counter.
inline void charge(OpCounter* counter, Stage stage, std::uint64_t macs,
                   std::uint64_t exps) noexcept {
  if (counter != nullptr) counter->add(stage, macs, exps);
}

inline void note_scratch(OpCounter* counter, std::size_t elements) noexcept {
  if (counter != nullptr) counter->note_scratch(elements);
}

}  // namespace swattn
