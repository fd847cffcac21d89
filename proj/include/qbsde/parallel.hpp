#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qbsde {

/// Process-wide cap on worker threads (0 = hardware concurrency).
inline int& max_threads() {
    static int cap = 0;
    return cap;
}

/// Apply fn(i) for i in [begin, end), split across workers. Each index is
/// touched by exactly one worker and writes to its own slots, so results do
/// not depend on the thread count. If workers throw, the exception raised at
/// the smallest index is rethrown after the join, which keeps error
/// reporting thread-count-independent too.
template <typename Fn>
void parallel_for(long begin, long end, Fn&& fn) {
    const long n = end - begin;
    if (n <= 0) return;
    int workers = max_threads() > 0 ? max_threads()
                                    : static_cast<int>(std::thread::hardware_concurrency());
    workers = static_cast<int>(std::max<long>(1, std::min<long>(workers, n)));
    if (workers == 1 || n < 4096) {
        for (long i = begin; i < end; ++i) fn(i);
        return;
    }
    std::mutex error_mutex;
    std::exception_ptr first_error;
    long first_error_index = end;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const long chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const long lo = begin + w * chunk;
        const long hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn, &error_mutex, &first_error, &first_error_index] {
            for (long i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (i < first_error_index) {
                        first_error_index = i;
                        first_error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qbsde
