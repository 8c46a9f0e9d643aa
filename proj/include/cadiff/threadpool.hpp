#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace cadiff {

// Resolves the worker count: `requested` if positive, otherwise the hardware
// count, in both cases capped by the CADIFF_THREADS environment variable.
int resolve_threads(int requested = 0);

// Runs fn(0..n_items-1), each exactly once, across up to n_threads workers.
// Runs inline when a single worker suffices. Callers own determinism: results
// must not depend on which worker runs which item or in what order.
inline void parallel_for(int n_items, int n_threads, const std::function<void(int)>& fn) {
    if (n_items <= 0) return;
    if (n_threads <= 1 || n_items == 1) {
        for (int i = 0; i < n_items; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n_items; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> threads;
    const int n = std::min(n_threads, n_items);
    threads.reserve(n - 1);
    for (int i = 1; i < n; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
}

}  // namespace cadiff
