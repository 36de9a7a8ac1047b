#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gsvie {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work is split into
/// contiguous blocks; results must be written to per-index slots by the caller.
/// If several indices throw, the exception of the smallest index is rethrown, so
/// failures are reported identically for any thread count.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    if (count == 0) return;
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::size_t> error_index(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t block = (count + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = w * block;
            const std::size_t end = std::min(count, begin + block);
            for (std::size_t i = begin; i < end; ++i) {
                try {
                    body(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                    error_index[w] = i;
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    std::size_t first = count;
    std::exception_ptr err;
    for (unsigned w = 0; w < threads; ++w) {
        if (errors[w] && error_index[w] < first) {
            first = error_index[w];
            err = errors[w];
        }
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace gsvie
