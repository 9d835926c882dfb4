#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace spider {

/// Resolves a --threads value: 0 means one worker per hardware thread.
inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(begin, end) over [0, count) in chunks of `chunk` items, spread
/// across `threads` workers. Bodies must write only to per-index outputs; the
/// result is then independent of scheduling. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, std::size_t chunk, Body&& body) {
    if (count == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t chunks = (count + chunk - 1) / chunk;
    const auto workers = static_cast<unsigned>(
        std::min<std::size_t>(resolve_threads(threads), chunks));
    if (workers <= 1) {
        body(std::size_t{0}, count);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        try {
            for (std::size_t c = next++; c < chunks; c = next++) {
                const std::size_t begin = c * chunk;
                body(begin, std::min(count, begin + chunk));
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = chunks;
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

/// Pairwise (cascade) summation; fixed association order regardless of threads.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 64) {
        double total = 0.0;
        for (double x : v) total += x;
        return total;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace spider
