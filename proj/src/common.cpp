// Copyright 2026 The dift Authors
// SPDX-License-Identifier: Apache-2.0

#include "dift/common.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dift {

namespace {
std::atomic<unsigned> g_max_threads{0};
}

int exit_code(ErrorCategory category)
{
    switch (category) {
    case ErrorCategory::Input: return 2;
    case ErrorCategory::Config: return 3;
    case ErrorCategory::Data: return 4;
    case ErrorCategory::Io: return 5;
    case ErrorCategory::Internal: return 10;
    }
    return 10;
}

void set_max_threads(unsigned n) { g_max_threads = n; }

unsigned max_threads()
{
    unsigned n = g_max_threads.load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)> &body)
{
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(max_threads(), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto &t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

} // namespace dift
