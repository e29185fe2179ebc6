#include "dyntex/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace dyntex {

namespace {

constexpr std::size_t kMinCostPerWorker = 1U << 16;

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("DYNTEX_THREADS")) {
    try {
      const long requested = std::stol(env);
      if (requested > 0) return static_cast<std::size_t>(requested);
    } catch (...) {
      // Unparseable values fall through to the hardware default.
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t cost,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t workers = std::min(worker_count(), n);
  workers = std::min(workers, std::max<std::size_t>(1, cost / kMinCostPerWorker));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
}

}  // namespace dyntex
