#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace revsignal {

/// Number of workers for `--jobs 0` (auto).
inline unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Items are
/// independent; callers store results by index so the outcome does not
/// depend on scheduling. The first exception is rethrown after all workers
/// stop.
template <typename Body>
void parallel_for(std::size_t count, unsigned jobs, Body&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> threads;
  const auto n = static_cast<std::size_t>(std::min<std::size_t>(jobs, count));
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace revsignal
