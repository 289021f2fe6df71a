// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace swattn {

// Worker count used by parallel_for. Defaults to SWATTN_NUM_THREADS when set,
// otherwise std::thread::hardware_concurrency().
std::size_t num_threads() noexcept;
void set_num_threads(std::size_t threads) noexcept;

// Runs body(i) for i in [0, count). Items are split into contiguous chunks,
// one per worker; each item runs exactly once. The first exception thrown by
// any worker is rethrown on the caller after all workers join.
//
// Callers must make every item write disjoint outputs. Results are then
// independent of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

// Restores the previous worker count on scope exit.
class ScopedThreads {
 public:
  explicit ScopedThreads(std::size_t threads) : saved_(num_threads()) {
    set_num_threads(threads);
  }
  ~ScopedThreads() { set_num_threads(saved_); }
  ScopedThreads(const ScopedThreads&) = delete;
  ScopedThreads& operator=(const ScopedThreads&) = delete;

 private:
  std::size_t saved_;
};

}  // namespace swattn
