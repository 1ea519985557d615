#pragma once

#include <cstddef>
#include <functional>

namespace polyfb {

/// Upper bound on worker threads used by parallel_for (default 1).
void set_thread_count(int threads);
int thread_count();

/// Calls fn(i) for i in [0, n), spread over at most thread_count() threads.
/// Callers write results into per-index slots and reduce afterwards in index
/// order, which keeps floating-point sums independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace polyfb
