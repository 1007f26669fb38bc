#pragma once

#include <vector>

#include "heisim/group.hpp"

namespace heisim {

struct KdePointEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Product-Gaussian kernel density estimate at one query point.
// `points` is row-major n x dim.
KdePointEstimate kde_at_point(const std::vector<double>& points, int dim,
                              const Vec& query, const Vec& bandwidth);

// Per-dimension Silverman rule h_i = factor * sigma_i (4/((D+2) n))^{1/(D+4)}.
Vec silverman_bandwidth(const std::vector<double>& points, int dim, double factor = 1.0);

// Least-squares slope of log(v) against log(t) with per-point standard
// errors propagated into the slope uncertainty.
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_std_error = 0.0;
};

SlopeFit fit_loglog_slope(const std::vector<double>& t, const std::vector<double>& v,
                          const std::vector<double>& v_std_error);

}  // namespace heisim
