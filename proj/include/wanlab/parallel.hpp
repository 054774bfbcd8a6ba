#pragma once

// Bounded worker pool for embarrassingly parallel index ranges. The worker
// count comes from WANLAB_WORKERS when set, hardware concurrency otherwise.

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace wanlab {

inline unsigned worker_count() {
  if (const char* env = std::getenv("WANLAB_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n >= 1 && n <= 1024) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

// Runs fn(begin, end) on disjoint chunks of [0, n). Each chunk must write only
// to its own slots; determinism is then independent of the worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const unsigned workers = worker_count();
  if (n == 0) return;
  if (workers <= 1 || n < 2 * workers) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    if (b >= n) break;
    const std::size_t e = std::min(n, b + chunk);
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace wanlab
