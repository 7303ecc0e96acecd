#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace gridfield {

/// Runs fn(i) for i in [0, n) on up to `threads` workers using static
/// contiguous chunks. Callers must write to disjoint outputs; results are then
/// independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace gridfield
