#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace factorlens {

namespace detail {

inline std::size_t default_thread_count() {
  if (const char* env = std::getenv("FACTORLENS_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline std::atomic<std::size_t>& thread_setting() {
  static std::atomic<std::size_t> n{default_thread_count()};
  return n;
}

}  // namespace detail

// Worker cap for all parallel loops. Results never depend on this value:
// every loop partitions work so that each output element is computed by
// exactly one worker in a fixed arithmetic order.
inline std::size_t num_threads() { return detail::thread_setting().load(); }

inline void set_num_threads(std::size_t n) {
  detail::thread_setting().store(std::max<std::size_t>(1, n));
}

// Calls fn(lo, hi) over disjoint chunks of [begin, end). Chunks are at least
// `grain` long. Exceptions from workers are rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, Fn&& fn) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  grain = std::max<std::size_t>(1, grain);
  std::size_t workers = std::min(num_threads(), (total + grain - 1) / grain);
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  const std::size_t chunk = (total + workers - 1) / workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = begin + w * chunk;
    std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace factorlens
