#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace subrift {

// Splits [0, n) into contiguous chunks, one worker thread per chunk. Callers
// write disjoint preallocated slots and draw per-index RNG substreams, so
// results do not depend on the thread count.
template <class F>
void parallel_for(int n, int threads, F&& body) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    int lo = static_cast<int>(static_cast<long long>(w) * n / threads);
    int hi = static_cast<int>(static_cast<long long>(w + 1) * n / threads);
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace subrift
