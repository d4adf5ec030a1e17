#pragma once

namespace anogan {

// Keeps large tensor buffers in the heap instead of fresh mmap'd pages, which
// otherwise fault in on every training or mapping step. No-op off glibc.
void tune_allocator();

}  // namespace anogan
