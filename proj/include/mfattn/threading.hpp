#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace mfattn {

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(begin, end) over a fixed block partition of [0, n).  Each index is
/// owned by exactly one worker, so per-index outputs are independent of the
/// thread count; callers do any cross-index reduction sequentially.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  if (threads <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  const int workers = std::min(threads, n);
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

/// Runs jobs indexed 0..n_jobs-1 on a worker pool.  Results must be written
/// to job-indexed slots by the callable; aggregation stays deterministic.
inline void parallel_jobs(int n_jobs, int threads, const std::function<void(int)>& job) {
  if (threads <= 1 || n_jobs <= 1) {
    for (int i = 0; i < n_jobs; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  const int workers = std::min(threads, n_jobs);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&next, n_jobs, &job] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_jobs) return;
        job(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mfattn
