#pragma once

#include <functional>

namespace stomax {

/// Process-wide worker count for path-parallel loops (results never depend
/// on it; reductions always run in fixed order).
void set_thread_count(int n);
int thread_count();

/// Runs fn(begin, end) on contiguous chunks of [0, n), possibly in parallel.
/// Chunks never overlap, so writers may fill disjoint slots without locks.
void parallel_for(int n, const std::function<void(int, int)>& fn);

}  // namespace stomax
