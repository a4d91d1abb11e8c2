#pragma once

#include "vbflow/core.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace vbflow {

/// Worker cap honored by the data-parallel loops (set from the CLI).
inline int& worker_count() {
    static int n = 1;
    return n;
}

/// Chunked parallel loop.  Bodies write to disjoint slots only, so results
/// are identical for any worker count.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// FNV-1a over raw bytes; used to key cached solve artifacts.
struct Fnv1a {
    std::uint64_t state = 1469598103934665603ull;

    void feed(const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= bytes[i];
            state *= 1099511628211ull;
        }
    }
    void feed(double x) { feed(&x, sizeof x); }
    void feed(int x) { feed(&x, sizeof x); }
    void feed(const Vec3& v) {
        feed(v.x());
        feed(v.y());
        feed(v.z());
    }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state));
        return buf;
    }
};

/// 17-significant-digit formatting so output files are round-trip exact.
inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void append_csv_value(std::string& line, double x) {
    if (!line.empty() && line.back() != '\n') line += ',';
    line += format_g17(x);
}

}  // namespace vbflow
