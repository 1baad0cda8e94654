#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace rawvoice {

/// Raises the allocator's mmap threshold so the multi-megabyte tensor
/// buffers churned by training stay on the heap free list instead of being
/// returned to the kernel (and page-faulted back) on every batch.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
}

}  // namespace rawvoice
