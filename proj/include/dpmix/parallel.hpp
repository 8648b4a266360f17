#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace dpmix {

/// Worker count: DPMIX_THREADS if set (>=1), else hardware concurrency.
inline unsigned max_threads() {
    if (const char* env = std::getenv("DPMIX_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

/// Runs fn(i) for i in [0, n). Each index owns its output slot and its own
/// RNG stream, so results do not depend on scheduling.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const unsigned threads = std::min<size_t>(max_threads(), n);
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace dpmix
