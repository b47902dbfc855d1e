#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace fmnav {

// Runs fn(0..n-1) across up to `workers` threads. Each index is processed
// exactly once; callers write into per-index slots so results do not depend
// on scheduling.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int nthreads = std::max(1, std::min(workers, n));
    if (nthreads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

}  // namespace fmnav
