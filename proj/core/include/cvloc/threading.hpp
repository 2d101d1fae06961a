#pragma once

#include <cstdint>
#include <functional>

namespace cvloc {

// Global cap on worker threads (default: hardware concurrency).
// Results never depend on the cap; only wall-clock does.
void set_thread_cap(int n);
int thread_cap();

// Runs body(i) for i in [0, n). Iterations are partitioned into
// contiguous ranges; each index is executed by exactly one thread.
// The caller guarantees iterations write disjoint locations.
void parallel_for(int64_t n, const std::function<void(int64_t)>& body);

}  // namespace cvloc
