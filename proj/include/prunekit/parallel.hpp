#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace prunekit {

// Worker cap: PRUNEKIT_THREADS env var, else hardware concurrency (max 8).
inline int thread_count() {
  if (const char* env = std::getenv("PRUNEKIT_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(hw > 8 ? 8 : hw);
}

// Runs fn(i) for i in [0, n). Workers own disjoint index strides, so results
// are independent of scheduling as long as fn writes only slot i.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  int workers = thread_count();
  if (workers <= 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<int64_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace prunekit
