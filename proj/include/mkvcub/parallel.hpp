#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace mkvcub {

/// Resolve a jobs setting: 0 means "all hardware threads", anything else is
/// taken literally (minimum 1).
inline int resolve_jobs(int jobs) {
    if (jobs > 0) return jobs;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run body(begin, end) over a contiguous index range, split across `jobs`
/// threads. Each invocation owns a disjoint chunk, so workers may write to
/// disjoint slots of shared output arrays. Results must not depend on the
/// split; reductions stay with the caller, in index order.
template <class Body>
void parallel_for(std::size_t n, int jobs, Body&& body) {
    jobs = resolve_jobs(jobs);
    if (n == 0) return;
    const std::size_t min_chunk = 256;
    std::size_t workers = static_cast<std::size_t>(jobs);
    if (workers > 1 && n / workers < min_chunk) workers = n / min_chunk;
    if (workers <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        if (begin >= n) break;
        const std::size_t end = begin + chunk < n ? begin + chunk : n;
        threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& t : threads) t.join();
}

} // namespace mkvcub
