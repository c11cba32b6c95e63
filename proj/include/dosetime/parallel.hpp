#pragma once

#include <cstddef>
#include <functional>

#ifdef DOSETIME_OPENMP
#include <omp.h>
#endif

namespace dosetime {

// OpenMP-backed index loop. Every kernel built on this writes into
// preallocated per-index slots and reduces serially afterwards, so outputs
// are identical for any worker count (and identical to the *_ref serial
// implementations kept alongside each kernel for testing).
template <typename Fn>
void parallel_for(std::ptrdiff_t n, const Fn& fn) {
#ifdef DOSETIME_OPENMP
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<size_t>(i));
#else
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<size_t>(i));
#endif
}

// Plain serial loop, the reference path.
template <typename Fn>
void serial_for(std::ptrdiff_t n, const Fn& fn) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<size_t>(i));
}

inline void set_parallelism(int jobs) {
#ifdef DOSETIME_OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

inline int parallelism() {
#ifdef DOSETIME_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace dosetime
