#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace nlhomog {

/// Number of worker threads used by chunked loops. 0 selects hardware concurrency.
void set_worker_threads(unsigned count);
unsigned worker_threads();

/// Fixed number of chunks for every reduction; independent of the thread count so
/// that chunk-ordered reductions are bit-identical across machines.
inline constexpr std::size_t kReductionChunks = 8;

struct ChunkRange {
    std::size_t index;
    std::size_t begin;
    std::size_t end;
};

inline ChunkRange chunk_range(std::size_t count, std::size_t chunks, std::size_t c) {
    const std::size_t base = count / chunks, extra = count % chunks;
    const std::size_t begin = c * base + std::min(c, extra);
    return {c, begin, begin + base + (c < extra ? 1 : 0)};
}

/// Runs body(ChunkRange) for each of `chunks` contiguous slices of [0, count).
/// Chunks may execute concurrently; callers reduce per-chunk results in index order.
template <class Body>
void for_each_chunk(std::size_t count, std::size_t chunks, Body&& body) {
    const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(chunks));
    if (workers <= 1 || count < 2 * chunks) {
        for (std::size_t c = 0; c < chunks; ++c) body(chunk_range(count, chunks, c));
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += workers) body(chunk_range(count, chunks, c));
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace nlhomog
