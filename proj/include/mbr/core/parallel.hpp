#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "mbr/core/common.hpp"

namespace mbr {

inline std::atomic<int>& thread_count_ref() {
  static std::atomic<int> n{0};  // 0 = auto
  return n;
}

inline void set_num_threads(int n) { thread_count_ref().store(n); }

inline int num_threads() {
  int n = thread_count_ref().load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static sharding: shard s covers [s*n/T, (s+1)*n/T). Shard contents depend
// only on (n, T), so reductions done in shard order are reproducible for a
// fixed thread count.
template <typename Fn>
void parallel_shards(Index n, const Fn& fn) {
  const int t = std::min<Index>(num_threads(), n > 0 ? n : 1);
  if (t <= 1 || n <= 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(t);
  for (int s = 0; s < t; ++s) {
    Index begin = n * s / t, end = n * (s + 1) / t;
    workers.emplace_back([&fn, s, begin, end] { fn(s, begin, end); });
  }
  for (auto& w : workers) w.join();
}

template <typename Fn>
void parallel_for(Index n, const Fn& fn) {
  parallel_shards(n, [&fn](int, Index begin, Index end) {
    for (Index i = begin; i < end; ++i) fn(i);
  });
}

inline int shard_count(Index n) { return std::min<Index>(num_threads(), n > 0 ? n : 1); }

}  // namespace mbr
