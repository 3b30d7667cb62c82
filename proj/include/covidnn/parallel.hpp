#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace covidnn {

// Worker cap: COVIDNN_THREADS if set, else hardware concurrency, floor 1.
inline int thread_cap() {
  static const int cap = [] {
    if (const char* env = std::getenv("COVIDNN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return cap;
}

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks, one
// per worker, so results are deterministic whenever different i write to
// disjoint locations. Nested calls run serially to avoid oversubscription.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  int workers = thread_cap();
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1 || detail::in_parallel_region()) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = lo + chunk < n ? lo + chunk : n;
    threads.emplace_back([&, w, lo, hi] {
      detail::in_parallel_region() = true;
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
      detail::in_parallel_region() = false;
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace covidnn
