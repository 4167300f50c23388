#pragma once

#include <functional>

namespace cavspec {

/// Global worker count for element loops.  0 restores the hardware default.
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) on contiguous chunks of [0, n).  Chunks are fixed by
/// index, so any reduction that concatenates per-chunk results in chunk order
/// is independent of the worker count.
void parallel_chunks(int n, const std::function<void(int, int)>& fn);

} // namespace cavspec
