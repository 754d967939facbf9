#pragma once

#include <cstddef>
#include <functional>

namespace svae {

// Worker count: SVAE_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Calls fn(i) for every i in [0, n), split into contiguous blocks across at
// most worker_count() threads. fn must only write to per-index state.
// The first exception thrown by any worker is rethrown after all join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace svae
