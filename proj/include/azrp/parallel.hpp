#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace azrp {

/// AZRP_THREADS if set to a positive integer, otherwise the hardware count.
inline unsigned thread_count() {
    if (const char* v = std::getenv("AZRP_THREADS")) {
        try {
            const int n = std::stoi(v);
            if (n > 0) return static_cast<unsigned>(n);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(k) for k in [0, n). Work is split into contiguous blocks, and
/// results must be written to slot k so the reduction stays deterministic.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned T = std::min<std::size_t>(thread_count(), std::max<std::size_t>(n, 1));
    if (T <= 1) {
        for (std::size_t k = 0; k < n; ++k) body(k);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(T);
    for (unsigned w = 0; w < T; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w * n / T; k < (w + 1) * n / T; ++k) body(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace azrp
