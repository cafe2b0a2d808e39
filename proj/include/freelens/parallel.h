#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace freelens {

// Worker cap: FREELENS_THREADS if set (>= 1), otherwise the machine
// parallelism.
inline int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long cap = static_cast<long>(hw);
  if (const char* env = std::getenv("FREELENS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) cap = v < cap ? v : cap;
  }
  return static_cast<int>(cap);
}

// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
// write results into preallocated slots so the outcome is independent of the
// schedule. The first exception thrown by any worker is rethrown.
template <typename F>
void parallel_for(std::ptrdiff_t n, F&& body) {
  if (n <= 0) return;
  const std::ptrdiff_t workers =
      std::min<std::ptrdiff_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::ptrdiff_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::ptrdiff_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (std::ptrdiff_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace freelens
