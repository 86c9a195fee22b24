#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace physforge {

/// Runs fn(i) for every i in [0, n) on up to `workers` threads. Indices are
/// claimed from a shared counter; results must be written to slot i by the
/// caller's fn so output order is schedule-invariant. The first exception
/// thrown by any task is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(body);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, std::size_t workers, Fn&& fn)
    -> std::vector<decltype(fn(items.front()))> {
  std::vector<decltype(fn(items.front()))> out(items.size());
  parallel_for(items.size(), workers,
               [&](std::size_t i) { out[i] = fn(items[i]); });
  return out;
}

}  // namespace physforge
