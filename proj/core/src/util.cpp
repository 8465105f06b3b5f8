#include "driftlab/util.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace driftlab {

int effective_workers(int n, int threads) {
    return std::max(1, std::min(threads, n));
}

void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
    if (n <= 0) {
        return;
    }
    const int workers = effective_workers(n, threads);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) {
            fn(i, 0);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
        const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        pool.emplace_back([begin, end, w, &fn, &errors] {
            try {
                for (int i = begin; i < end; ++i) {
                    fn(i, w);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }
}

}  // namespace driftlab
