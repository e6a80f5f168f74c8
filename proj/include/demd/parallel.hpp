#pragma once

#include <cstddef>

namespace demd {

/// Number of worker threads used by parallel loops. Defaults to the
/// OpenMP runtime's choice (available cores).
int worker_count();
void set_worker_count(int workers);

/// Runs body(i) for i in [0, n). Each index must write disjoint output so
/// that results do not depend on the schedule.
template <typename Body>
void parallel_for(std::ptrdiff_t n, Body&& body) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(worker_count())
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

/// Dynamic-schedule variant for loops whose iterations vary in cost.
template <typename Body>
void parallel_for_dynamic(std::ptrdiff_t n, Body&& body) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

}  // namespace demd
