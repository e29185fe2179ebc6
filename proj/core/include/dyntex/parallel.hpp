#pragma once

#include <cstddef>
#include <functional>

namespace dyntex {

/// Worker cap: DYNTEX_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(begin, end) over disjoint chunks of [0, n). Falls back to a
/// single in-thread call when n or `cost` (an estimate of scalar work) is
/// too small to amortize thread start-up. Chunks never share output elements,
/// so results are independent of the worker count.
void parallel_for(std::size_t n, std::size_t cost,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace dyntex
