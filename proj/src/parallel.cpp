#include "demd/parallel.hpp"

#include <algorithm>
#include <atomic>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace demd {

namespace {
std::atomic<int> override_workers{0};
}

int worker_count() {
  const int set = override_workers.load();
  if (set > 0) return set;
#if defined(_OPENMP)
  return std::max(1, omp_get_max_threads());
#else
  return 1;
#endif
}

void set_worker_count(int workers) { override_workers.store(std::max(0, workers)); }

}  // namespace demd
