#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace embedkit {

// Worker count for data-parallel loops: EMBEDKIT_WORKERS when set and
// positive, hardware concurrency otherwise.
inline unsigned default_workers() {
    if (const char* env = std::getenv("EMBEDKIT_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Runs fn(begin, end) over a static partition of [0, n). Each index is
// processed by exactly one worker, so results are independent of the worker
// count as long as fn writes only to slots it owns.
inline void parallel_chunks(std::size_t n, unsigned workers,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (workers == 0) workers = 1;
    const std::size_t nthreads = std::min<std::size_t>(workers, n);
    if (nthreads <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace embedkit
