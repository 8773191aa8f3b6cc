#pragma once

// Row-parallel loops with deterministic reductions: every row is summed
// sequentially and the row partials are combined in a fixed order, so
// results do not depend on the thread count.

#include <cstddef>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vortex {

namespace detail {
inline int threads_from_env() {
  const char* s = std::getenv("VORTEX_THREADS");
  if (s == nullptr) return 0;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v <= 0) return 0;
  return static_cast<int>(v);
}

inline int& thread_cap() {
  static int cap = threads_from_env();
  return cap;
}
}  // namespace detail

// 0 means "runtime default".
inline void set_thread_count(int n) { detail::thread_cap() = n > 0 ? n : 0; }

inline int thread_count() {
#ifdef _OPENMP
  int cap = detail::thread_cap();
  return cap > 0 ? cap : omp_get_max_threads();
#else
  return 1;
#endif
}

template <class F>
void for_rows(std::size_t rows, F&& f) {
  const long nr = static_cast<long>(rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(thread_count())
#endif
  for (long j = 0; j < nr; ++j) f(static_cast<std::size_t>(j));
}

template <class F>
double sum_rows(std::size_t rows, F&& f) {
  std::vector<double> partial(rows, 0.0);
  for_rows(rows, [&](std::size_t j) { partial[j] = f(j); });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace vortex
