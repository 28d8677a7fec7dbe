#pragma once

#include <cstddef>
#include <functional>

namespace sblkit {

/// Number of workers to use when `requested` is 0 (machine parallelism).
std::size_t resolve_threads(std::size_t requested);

/// Run fn(i) for i in [0, count) on up to `threads` workers.
///
/// Work is handed out in index order through a shared counter; callers that
/// need deterministic results write into per-index slots and reduce
/// sequentially afterwards, so the outcome is independent of thread count.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace sblkit
