#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pnlt {

namespace detail {
inline std::atomic<unsigned>& worker_limit() {
    static std::atomic<unsigned> limit{std::max(1u, std::thread::hardware_concurrency())};
    return limit;
}
} // namespace detail

/// Caps the number of threads used by data-parallel loops in the library.
inline void set_workers(unsigned n) { detail::worker_limit() = std::max(1u, n); }
inline unsigned workers() { return detail::worker_limit(); }

/// Runs fn(i) for i in [0, count). Work is handed out in index order; callers that
/// reduce must write into per-index slots and sum sequentially afterwards so results
/// do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t width = std::min<std::size_t>(workers(), count);
    if (width <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(width - 1);
    for (std::size_t t = 1; t < width; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace pnlt
