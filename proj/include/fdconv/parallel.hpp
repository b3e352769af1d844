// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <utility>
#include <vector>

namespace fdconv {

namespace detail {
inline std::atomic<unsigned>& thread_count_slot() {
  static std::atomic<unsigned> n{0};  // 0 = hardware concurrency
  return n;
}
}  // namespace detail

inline void set_num_threads(unsigned n) { detail::thread_count_slot().store(n); }

inline unsigned num_threads() {
  unsigned n = detail::thread_count_slot().load();
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  return n;
}

// Splits [0, count) into at most num_threads() contiguous chunks and runs
// fn(chunk_index, begin, end) on each, chunk 0 on the calling thread.
// Workers write disjoint outputs; any floating-point reduction across items
// must be done by the caller in item order so results do not depend on the
// thread count.
template <class F>
inline void parallel_chunks(std::size_t count, F&& fn) {
  if (count == 0) return;
  std::size_t nt = num_threads();
  if (nt > count) nt = count;
  if (nt <= 1) {
    fn(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  const std::size_t base = count / nt, rem = count % nt;
  std::vector<std::thread> workers;
  workers.reserve(nt - 1);
  std::size_t begin = base + (rem > 0 ? 1 : 0);
  for (std::size_t t = 1; t < nt; ++t) {
    std::size_t len = base + (t < rem ? 1 : 0);
    workers.emplace_back([&fn, t, begin, len] { fn(t, begin, begin + len); });
    begin += len;
  }
  fn(std::size_t{0}, std::size_t{0}, base + (rem > 0 ? 1 : 0));
  for (auto& w : workers) w.join();
}

}  // namespace fdconv
