#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace kinetic {

// Worker count: --threads flag > KC_THREADS env > hardware concurrency.
inline int& thread_count() {
  static int n = [] {
    if (const char* env = std::getenv("KC_THREADS")) {
      int k = std::atoi(env);
      if (k > 0) return k;
    }
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    return hw > 0 ? hw : 1;
  }();
  return n;
}

// Runs fn(i) for i in [0, n). Work is split into fixed contiguous chunks so
// that per-index results are independent of the worker count; reductions over
// the results must be done by the caller in index order.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = thread_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<std::size_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace kinetic
