#pragma once

#include <cstddef>
#include <functional>

namespace framing {

/// Worker count from FRAMING_THREADS, else the hardware concurrency (min 1).
std::size_t thread_count();

/// Runs f(i) for i in [0, n) on up to `threads` workers (0 = thread_count()).
/// Each index runs exactly once; callers write results into per-index slots
/// so the outcome does not depend on scheduling. The first exception thrown
/// by any f(i) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, std::size_t threads = 0);

}  // namespace framing
