#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace transnet {

// Strided fan-out over [0, count) with per-index results written to
// caller-owned slots; the caller reduces in index order, so the arithmetic
// never depends on the thread count.
template <typename Fn>
void run_indexed(int count, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&fn, w, workers, count] {
      for (int i = w; i < count; i += workers) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace transnet
