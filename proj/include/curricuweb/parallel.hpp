#pragma once

#include <cstddef>
#include <functional>

namespace curricuweb {

// Worker cap from CURRICUWEB_THREADS (default 1, invalid values fall back to 1).
std::size_t worker_threads();

// Calls fn(i) for every i in [0, n). Work is split into contiguous blocks;
// callers write results into preallocated slots so output never depends on
// scheduling. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace curricuweb
