#ifndef RARESIM_PARALLEL_HPP
#define RARESIM_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace raresim {

// Resolves worker count: 0 means hardware concurrency.
int resolve_workers(int requested);

// Runs fn(begin, end) over a partition of [0, count) on `workers` threads.
// Blocks until done. Chunks are contiguous and assigned statically, so any
// per-index output written by fn lands in a deterministic slot regardless of
// scheduling; callers must not rely on cross-chunk ordering for side effects.
void parallel_for(std::int64_t count, int workers,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace raresim

#endif
