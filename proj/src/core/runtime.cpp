#include "rtd/core/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace rtd {

void configure_allocator() {
#if defined(__GLIBC__)
  static bool done = false;
  if (done) return;
  done = true;
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace rtd
