#pragma once

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace locbayes {

/// Centered moving average with truncated windows at the ends.
/// `window` is the full width; window <= 1 is the identity.
inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
    if (v.empty()) throw std::invalid_argument("moving_average: empty input");
    if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
    int n = static_cast<int>(v.size());
    int half = (window - 1) / 2;
    std::vector<double> out(v.size());
    for (int i = 0; i < n; ++i) {
        int lo = std::max(0, i - half);
        int hi = std::min(n - 1, i + half);
        double s = 0.0;
        for (int j = lo; j <= hi; ++j) s += v[j];
        out[i] = s / (hi - lo + 1);
    }
    return out;
}

/// Parallelism cap from the LOCBAYES_THREADS environment variable
/// (default 1; values above hardware concurrency are clipped).
inline int thread_cap() {
    const char* env = std::getenv("LOCBAYES_THREADS");
    if (!env) return 1;
    int requested = std::atoi(env);
    if (requested < 1) return 1;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    return std::min(requested, hw);
}

/// Run fn(i) for i in [0, n).  Each index writes only its own slot of any
/// output, so results are identical for every thread count.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    int threads = std::min(thread_cap(), n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace locbayes
