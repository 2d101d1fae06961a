#include "cvloc/threading.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace cvloc {

namespace {
std::atomic<int> g_thread_cap{0};  // 0 = unset, use hardware concurrency
}

void set_thread_cap(int n) { g_thread_cap.store(n > 0 ? n : 1); }

int thread_cap() {
    int cap = g_thread_cap.load();
    if (cap > 0) return cap;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& body) {
    if (n <= 0) return;
    int workers = std::min<int64_t>(thread_cap(), n);
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&body, lo, hi] {
            for (int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace cvloc
