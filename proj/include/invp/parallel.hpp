#pragma once

#include <cstddef>
#include <functional>

namespace invp {

// Process-wide cap on worker threads. 0 means hardware concurrency.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

// Runs body(begin, end) over fixed-size chunks of [0, count). Chunk
// boundaries depend only on count and grain, never on the worker count, so
// any per-index output is identical for every thread configuration.
void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace invp
