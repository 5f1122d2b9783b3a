#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace coifnet {

// Training allocates and frees many multi-megabyte tensors per step. glibc
// would otherwise serve each one with a fresh mmap and return it on free.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace coifnet
