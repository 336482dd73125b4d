#include "smplab/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace smplab {

namespace {

std::size_t initial_workers() {
    if (const char* env = std::getenv("SMPLAB_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

std::atomic<std::size_t>& workers() {
    static std::atomic<std::size_t> n{initial_workers()};
    return n;
}

}  // namespace

std::size_t worker_count() { return workers().load(std::memory_order_relaxed); }

void set_worker_count(std::size_t n) { workers().store(n == 0 ? 1 : n, std::memory_order_relaxed); }

}  // namespace smplab
