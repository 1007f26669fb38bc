#include "heisim/kde.hpp"

#include <cmath>

#include "heisim/errors.hpp"
#include "heisim/parallel.hpp"

namespace heisim {

KdePointEstimate kde_at_point(const std::vector<double>& points, int dim,
                              const Vec& query, const Vec& bandwidth) {
    const long n = static_cast<long>(points.size() / static_cast<size_t>(dim));
    if (n < 2) throw InsufficientSamples("kde_at_point: need at least two points");
    double log_norm = 0.0;
    for (int k = 0; k < dim; ++k) {
        if (!(bandwidth[k] > 0.0)) throw InvalidParam("kde_at_point: bandwidth must be > 0");
        log_norm += std::log(bandwidth[k] * std::sqrt(2.0 * M_PI));
    }
    MomentSums ms = reduce_moments(n, [&](long i, bool&) {
        double e = 0.0;
        const double* row = &points[static_cast<size_t>(i) * dim];
        for (int k = 0; k < dim; ++k) {
            double u = (row[k] - query[k]) / bandwidth[k];
            e += 0.5 * u * u;
        }
        return std::exp(-e - log_norm);
    });
    double mean = ms.sum / static_cast<double>(n);
    double var = (ms.sum_sq - static_cast<double>(n) * mean * mean) /
                 static_cast<double>(n - 1);
    if (var < 0.0) var = 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

Vec silverman_bandwidth(const std::vector<double>& points, int dim, double factor) {
    const long n = static_cast<long>(points.size() / static_cast<size_t>(dim));
    if (n < 2) throw InsufficientSamples("silverman_bandwidth: need at least two points");
    Vec mean = Vec::Zero(dim), var = Vec::Zero(dim);
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) mean[k] += points[static_cast<size_t>(i) * dim + k];
    mean /= static_cast<double>(n);
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) {
            double u = points[static_cast<size_t>(i) * dim + k] - mean[k];
            var[k] += u * u;
        }
    var /= static_cast<double>(n - 1);
    double rate = std::pow(4.0 / ((dim + 2.0) * static_cast<double>(n)), 1.0 / (dim + 4.0));
    Vec h(dim);
    for (int k = 0; k < dim; ++k) h[k] = factor * std::sqrt(var[k]) * rate;
    return h;
}

SlopeFit fit_loglog_slope(const std::vector<double>& t, const std::vector<double>& v,
                          const std::vector<double>& v_std_error) {
    const size_t n = t.size();
    if (n < 2 || v.size() != n) throw InvalidParam("fit_loglog_slope: need >= 2 points");
    double sx = 0.0, sy = 0.0;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
        if (!(t[i] > 0.0) || !(v[i] > 0.0))
            throw InvalidParam("fit_loglog_slope: needs positive data");
        x[i] = std::log(t[i]);
        y[i] = std::log(v[i]);
        sx += x[i];
        sy += y[i];
    }
    double xbar = sx / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (x[i] - xbar) * (x[i] - xbar);
        sxy += (x[i] - xbar) * (y[i] - sy / static_cast<double>(n));
    }
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = sy / static_cast<double>(n) - fit.slope * xbar;
    // delta-method variance of each log(v_i), pushed through the OLS weights
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double c = (x[i] - xbar) / sxx;
        double sig = v_std_error.size() == n ? v_std_error[i] / v[i] : 0.0;
        var += c * c * sig * sig;
    }
    fit.slope_std_error = std::sqrt(var);
    return fit;
}

}  // namespace heisim
