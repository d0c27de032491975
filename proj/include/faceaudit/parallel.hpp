#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace faceaudit {

// Worker count: explicit request > FACEAUDIT_WORKERS env > hardware.
int resolve_workers(int requested);

// Runs fn(block_index) for block_index in [0, block_count). Blocks are
// claimed dynamically but block identity is fixed, so any per-block output
// is independent of the worker count. fn must not throw.
void parallel_blocks(std::size_t block_count, int workers,
                     const std::function<void(std::size_t)>& fn);

}  // namespace faceaudit
