#pragma once

#include <cstddef>
#include <functional>

namespace patchlab {

// Worker count: PATCHLAB_THREADS if set, else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is handled exactly once; callers
// write into per-index slots and reduce afterwards in index order, so
// results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace patchlab
