#pragma once

#include "pfq/random.hpp"

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pfq {

// Worker count from PFQ_WORKERS, else 1.
std::size_t default_workers();

inline constexpr std::size_t kChunkSize = 1024;

// Number of fixed-size chunks covering n items.
inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunkSize)
{
    return (n + chunk - 1) / chunk;
}

// Calls fn(c, rng, begin, end) for every chunk c of [0, n). Chunk c always
// draws from Rng::substream(seed, c), so results are identical for any worker
// count as long as the caller reduces per-chunk results in chunk order.
template <class Fn>
void for_each_chunk(std::size_t n, std::uint64_t seed, std::size_t workers, Fn&& fn,
                    std::size_t chunk = kChunkSize)
{
    const std::size_t chunks = chunk_count(n, chunk);
    auto run = [&](std::size_t c) {
        Rng rng = Rng::substream(seed, c);
        const std::size_t begin = c * chunk;
        fn(c, rng, begin, std::min(n, begin + chunk));
    };
    workers = std::max<std::size_t>(1, std::min(workers, chunks));
    if (workers == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < chunks; c = next++) {
                try {
                    run(c);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = chunks;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace pfq
