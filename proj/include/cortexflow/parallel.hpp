#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cortexflow {

// Thread count used by parallel_for. 0 means "OpenMP default".
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Each index must write only its own outputs,
// so the result does not depend on the schedule or the thread count.
template <class F>
void parallel_for(std::int64_t n, F&& fn) {
#ifdef _OPENMP
  if (num_threads() != 1 && n > 8) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

// Serial loop with the same signature, kept as the reference path for tests
// and benchmarks.
template <class F>
void serial_for(std::int64_t n, F&& fn) {
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace cortexflow
