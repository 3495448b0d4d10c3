#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gpfq::parallel {

/// Worker count used by parallel_for. Defaults to 1.
unsigned thread_count() noexcept;
void set_thread_count(unsigned n) noexcept;

/// Calls fn(i) for every i in [0, n). Indices are split into contiguous
/// chunks, one per worker. Callers write results into per-index slots so the
/// outcome does not depend on the worker count. The exception raised at the
/// lowest chunk is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    threads.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Sets the worker count for the lifetime of the guard.
class ScopedThreads {
 public:
  explicit ScopedThreads(unsigned n) noexcept : saved_(thread_count()) { set_thread_count(n); }
  ~ScopedThreads() { set_thread_count(saved_); }
  ScopedThreads(const ScopedThreads&) = delete;
  ScopedThreads& operator=(const ScopedThreads&) = delete;

 private:
  unsigned saved_;
};

}  // namespace gpfq::parallel
