#pragma once

#include <cstddef>
#include <functional>

namespace hugsim {

/// Runs fn(i) for i in [0, n) over `threads` workers (0 = hardware
/// concurrency). Work items are assigned in contiguous static blocks, so the
/// mapping from index to worker never depends on timing.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned threads = 0);

unsigned resolve_thread_count(unsigned requested);

}  // namespace hugsim
