#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace comfree::parallel {

namespace detail {
inline int& worker_override() {
  static int value = 0;
  return value;
}
}  // namespace detail

//! Worker cap: set_worker_count() if called, else COMFREE_THREADS, else hardware concurrency.
inline int worker_count() {
  if (detail::worker_override() > 0) return detail::worker_override();
  if (const char* env = std::getenv("COMFREE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  static const int fallback = [] {
#ifdef _OPENMP
    return std::max(1, omp_get_max_threads());
#else
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
#endif
  }();
  return fallback;
}

//! 0 restores the environment/default behaviour.
inline void set_worker_count(int n) { detail::worker_override() = std::max(0, n); }

//! Calls fn(i) for i in [0, n). Iterations must not share mutable state. If several throw, the
//! exception of the lowest index is rethrown, so failures do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for num_threads(workers) schedule(static)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace comfree::parallel
