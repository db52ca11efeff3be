#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace klmm {

/// Static-partition parallel loop over [0, n). Each index is processed by
/// exactly one worker; results must be written to per-index slots so the
/// outcome is independent of the thread count.
inline void parallel_for(long n, int threads,
                         const std::function<void(long)>& fn) {
  if (n <= 0) return;
  threads = std::max(1, threads);
  if (threads == 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  const long workers = std::min<long>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (long w = 0; w < workers; ++w) {
    const long begin = w * n / workers;
    const long end = (w + 1) * n / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (long i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace klmm
