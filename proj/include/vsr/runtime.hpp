#pragma once

// Process-level settings shared by the executables.

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace vsr {

/// Training allocates many short-lived matrices of a few megabytes. glibc's
/// default serves those with mmap/munmap, which dominates the run time; a
/// higher threshold keeps them on the heap.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

/// Worker count from VSR_WORKERS, else the hardware concurrency.
inline int worker_count_from_env() {
  if (const char* v = std::getenv("VSR_WORKERS")) {
    try {
      const int n = std::stoi(v);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace vsr
