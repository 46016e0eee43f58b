#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace gcm {

// 0 means "use hardware concurrency".
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over disjoint chunks of [0, n). Callers must write to
// disjoint, index-addressed output slots so the result is schedule-independent.
inline void parallel_for(int64_t n, int threads,
                         const std::function<void(int64_t, int64_t)>& fn) {
    threads = resolve_threads(threads);
    if (n <= 0) return;
    if (threads <= 1 || n < 256) {
        fn(0, n);
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(threads, n));
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace gcm
