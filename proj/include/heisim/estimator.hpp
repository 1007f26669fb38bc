#pragma once

#include <cmath>
#include <cstdint>

#include "heisim/parallel.hpp"

namespace heisim {

// Monte Carlo estimate with its sampling error and bookkeeping.
struct EstimatorResult {
    double value = 0.0;
    double std_error = 0.0;
    long n_samples = 0;
    uint64_t seed = 0;
    double flagged_fraction = 0.0;
};

inline EstimatorResult estimator_from_moments(const MomentSums& ms, uint64_t seed) {
    EstimatorResult r;
    r.n_samples = ms.n;
    r.seed = seed;
    if (ms.n == 0) return r;
    r.value = ms.sum / static_cast<double>(ms.n);
    if (ms.n > 1) {
        double var = (ms.sum_sq - static_cast<double>(ms.n) * r.value * r.value) /
                     static_cast<double>(ms.n - 1);
        if (var < 0.0) var = 0.0;  // rounding on constant samples
        r.std_error = std::sqrt(var / static_cast<double>(ms.n));
    }
    r.flagged_fraction = static_cast<double>(ms.flagged) / static_cast<double>(ms.n);
    return r;
}

// z-score of the difference of two independent estimates.
inline double z_score(const EstimatorResult& a, const EstimatorResult& b) {
    double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    if (se == 0.0) return (a.value == b.value) ? 0.0 : INFINITY;
    return (a.value - b.value) / se;
}

}  // namespace heisim
