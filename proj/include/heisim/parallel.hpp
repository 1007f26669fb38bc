#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace heisim {

// Worker count: HEISIM_WORKERS env var, else hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("HEISIM_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Splits [0, n) into fixed-size chunks and runs fn(chunk_index, begin, end)
// across workers.  Chunk boundaries depend only on n and chunk_size, never on
// the worker count, so per-chunk partial results combined in ascending chunk
// order give results that are identical for any number of workers.
template <class Fn>
void parallel_chunks(long n, long chunk_size, Fn&& fn) {
    if (n <= 0) return;
    long n_chunks = (n + chunk_size - 1) / chunk_size;
    int workers = worker_count();
    if (workers <= 1 || n_chunks == 1) {
        for (long c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (long c = w; c < n_chunks; c += workers)
                    fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Neumaier-compensated scalar accumulator; used inside one chunk so the
// chunk partial does not depend on summation luck.
struct CompensatedSum {
    double s = 0.0;
    double c = 0.0;
    inline void add(double x) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    inline double value() const { return s + c; }
};

// Deterministic mean/variance reduction over n samples: per-chunk compensated
// partials, combined in chunk order.  `eval(i)` returns the i-th sample.
struct MomentSums {
    double sum = 0.0;
    double sum_sq = 0.0;
    long n = 0;
    long flagged = 0;
};

template <class Eval>
MomentSums reduce_moments(long n, Eval&& eval, long chunk_size = 4096) {
    long n_chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<MomentSums> parts(static_cast<size_t>(std::max<long>(n_chunks, 0)));
    parallel_chunks(n, chunk_size, [&](long c, long b, long e) {
        CompensatedSum s, s2;
        long flagged = 0;
        for (long i = b; i < e; ++i) {
            bool flag = false;
            double x = eval(i, flag);
            s.add(x);
            s2.add(x * x);
            if (flag) ++flagged;
        }
        parts[static_cast<size_t>(c)] = {s.value(), s2.value(), e - b, flagged};
    });
    MomentSums total;
    for (const auto& p : parts) {
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
        total.n += p.n;
        total.flagged += p.flagged;
    }
    return total;
}

// Same contract for samples that carry several jointly-reduced components.
template <class Eval>
std::vector<double> reduce_vector_sums(long n, int width, Eval&& eval,
                                       long chunk_size = 4096) {
    long n_chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<std::vector<double>> parts(static_cast<size_t>(std::max<long>(n_chunks, 0)));
    parallel_chunks(n, chunk_size, [&](long c, long b, long e) {
        std::vector<CompensatedSum> acc(static_cast<size_t>(width));
        std::vector<double> row(static_cast<size_t>(width));
        for (long i = b; i < e; ++i) {
            eval(i, row.data());
            for (int k = 0; k < width; ++k) acc[static_cast<size_t>(k)].add(row[static_cast<size_t>(k)]);
        }
        std::vector<double> part(static_cast<size_t>(width));
        for (int k = 0; k < width; ++k) part[static_cast<size_t>(k)] = acc[static_cast<size_t>(k)].value();
        parts[static_cast<size_t>(c)] = std::move(part);
    });
    std::vector<double> total(static_cast<size_t>(width), 0.0);
    for (const auto& p : parts)
        for (int k = 0; k < width; ++k) total[static_cast<size_t>(k)] += p[static_cast<size_t>(k)];
    return total;
}

}  // namespace heisim
