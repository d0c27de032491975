#include "faceaudit/parallel.hpp"

#include <algorithm>
#include <cstdlib>

namespace faceaudit {

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("FACEAUDIT_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

void parallel_blocks(std::size_t block_count, int workers,
                     const std::function<void(std::size_t)>& fn) {
    workers = resolve_workers(workers);
    if (block_count == 0) return;
    if (workers <= 1 || block_count == 1) {
        for (std::size_t b = 0; b < block_count; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto drain = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= block_count) return;
            fn(b);
        }
    };
    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(workers), block_count);
    std::vector<std::thread> pool;
    pool.reserve(n_threads - 1);
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(drain);
    drain();
    for (auto& th : pool) th.join();
}

}  // namespace faceaudit
