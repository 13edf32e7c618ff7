#pragma once

#include <cstddef>
#include <functional>

namespace qfe {

// Runs fn(0..n-1) on up to `threads` workers (0 or 1 runs inline). Each index
// runs exactly once; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace qfe
