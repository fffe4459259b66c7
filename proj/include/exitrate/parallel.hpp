#pragma once

// Deterministic data parallelism: work is cut into fixed-size chunks, chunk
// results are folded in index order, so the outcome is identical for any
// worker count. EXITRATE_THREADS caps the workers (speed only, never results).

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace exitrate {

inline int worker_count(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("EXITRATE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Evaluates `chunk_fn(begin, end) -> R` over [0, total) in chunks of
/// `chunk_size` and folds the per-chunk results in chunk order.
template <typename R, typename ChunkFn, typename FoldFn>
R parallel_chunked(std::size_t total, std::size_t chunk_size, ChunkFn&& chunk_fn,
                   R init, FoldFn&& fold, int workers = 0) {
    if (total == 0) return init;
    const std::size_t n_chunks = (total + chunk_size - 1) / chunk_size;
    std::vector<R> partial(n_chunks);
    const int n_workers = std::min<std::size_t>(worker_count(workers), n_chunks);

    if (n_workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const std::size_t b = c * chunk_size;
            partial[c] = chunk_fn(b, std::min(b + chunk_size, total));
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= n_chunks) return;
                const std::size_t b = c * chunk_size;
                partial[c] = chunk_fn(b, std::min(b + chunk_size, total));
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    R acc = std::move(init);
    for (auto& p : partial) acc = fold(std::move(acc), std::move(p));
    return acc;
}

}  // namespace exitrate
