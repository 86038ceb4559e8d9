#pragma once

namespace rtd {

// Keeps freed tensor buffers in the heap instead of returning them to the OS
// after every op. Training allocates and frees the same sizes each step, and
// the default glibc thresholds turn that into mmap/munmap churn.
void configure_allocator();

}  // namespace rtd
