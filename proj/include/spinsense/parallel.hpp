// parallel.hpp: order-deterministic parallel map over an index range.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace spinsense {

// Worker count: explicit value if > 0, else SPINSENSE_WORKERS, else hardware.
inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SPINSENSE_WORKERS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// out[i] = fn(i). Items are claimed dynamically but results land in index
// order, so output never depends on the worker count. The first exception
// thrown by any item is rethrown after all workers stop.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t count, int workers, Fn&& fn) {
    std::vector<T> out(count);
    const auto nthreads = static_cast<std::size_t>(std::max(1, workers));
    if (nthreads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                next.store(count);
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(nthreads, count); ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace spinsense
