#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace smplab {

/// Number of worker threads used by parallel_for. Defaults to the hardware
/// concurrency; SMPLAB_THREADS overrides it.
[[nodiscard]] std::size_t worker_count();
void set_worker_count(std::size_t n);

/// Static-chunked parallel loop over [0, n). Each index is visited exactly
/// once; callers write results into per-index slots so output never depends
/// on scheduling. If several indices throw, the exception of the lowest
/// index is rethrown (a worker stops at its first failure).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::size_t first_index = n;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            std::size_t failed_at = begin;
            try {
                for (; failed_at < end; ++failed_at) fn(failed_at);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (failed_at < first_index) {
                    first_index = failed_at;
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace smplab
