#include "heisim/girsanov.hpp"

#include <algorithm>
#include <cmath>

#include "heisim/errors.hpp"
#include "heisim/philox.hpp"

namespace heisim {

namespace {

struct PathWeightValue {
    double r = 1.0;       // Girsanov weight
    double payload = 0.0; // g(endpoint) or another per-path functional
};

// Shared path loop: reference flow from `start`, Girsanov weight along it,
// and a caller-supplied payload functional of the whole path.
template <class Payload>
std::vector<double> weighted_reduction(const GroupStructure& gs, const DriftSpec& drift,
                                       double t_final, const Vec& start, long n_paths,
                                       uint64_t seed, const WeakOpts& opts,
                                       Payload&& payload,
                                       std::vector<double>* per_sample = nullptr) {
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(t_final);
    if (per_sample) per_sample->assign(static_cast<size_t>(n_paths) * 2, 0.0);
    // sums: R, Rg, R^2, R^2 g, R^2 g^2
    return reduce_vector_sums(
        n_paths, 5,
        [&](long i, double* out) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t_final, seed,
                                                static_cast<uint64_t>(i));
            ReferencePath path = reference_flow(gs, start, grid);
            double r = girsanov_weight(gs, drift, path, opts.truncation_level);
            double g = payload(path, grid);
            if (!std::isfinite(r) || !std::isfinite(g))
                throw NonFinite("weighted path functional is not finite");
            out[0] = r;
            out[1] = r * g;
            out[2] = r * r;
            out[3] = r * r * g;
            out[4] = r * r * g * g;
            if (per_sample) {
                (*per_sample)[static_cast<size_t>(2 * i)] = r;
                (*per_sample)[static_cast<size_t>(2 * i) + 1] = g;
            }
        },
        opts.chunk_size);
}

EstimatorResult self_normalized(const std::vector<double>& sums, long n, uint64_t seed,
                                double min_ess_fraction) {
    double sum_r = sums[0], sum_rg = sums[1], sum_r2 = sums[2], sum_r2g = sums[3],
           sum_r2g2 = sums[4];
    if (!(sum_r > 0.0)) throw DegenerateWeights("weak_expectation: total weight is zero");
    double ess = sum_r * sum_r / sum_r2;
    if (ess < min_ess_fraction * static_cast<double>(n))
        throw DegenerateWeights("weak_expectation: effective sample size below threshold");
    EstimatorResult res;
    res.n_samples = n;
    res.seed = seed;
    res.value = sum_rg / sum_r;
    // sum (R_i (g_i - est))^2 expanded in accumulated moments
    double ssq = sum_r2g2 - 2.0 * res.value * sum_r2g + res.value * res.value * sum_r2;
    if (ssq < 0.0) ssq = 0.0;
    if (n > 1)
        res.std_error = std::sqrt(ssq * static_cast<double>(n) / static_cast<double>(n - 1)) /
                        sum_r;
    return res;
}

}  // namespace

double girsanov_weight(const GroupStructure& gs, const DriftSpec& drift,
                       const ReferencePath& path, double truncation_level) {
    const BrownianGrid& grid = *path.grid;
    const int n = grid.n_steps;
    const int m = gs.m();
    const double dt = grid.dt();
    if (drift.is_zero()) return 1.0;
    double log_w = 0.0;
    double quad = 0.0;  // running left-point quadrature of |b|^2
    Vec b(m);
    for (int j = 0; j < n; ++j) {
        if (quad >= truncation_level) break;  // T_n reached
        Vec z = path.state_at(j);
        drift.eval(grid.time_at(j), z, b);
        double b2 = b.squaredNorm();
        if (!std::isfinite(b2)) throw NonFinite("girsanov_weight: |b|^2 not finite");
        double dot = 0.0;
        for (int c = 0; c < m; ++c) dot += b[c] * grid.step(j)[c];
        log_w += dot - 0.5 * b2 * dt;
        quad += b2 * dt;
    }
    double w = std::exp(log_w);
    if (!std::isfinite(w)) throw NonFinite("girsanov_weight: weight overflowed");
    return w;
}

EstimatorResult weak_expectation(const GroupStructure& gs, const DriftSpec& drift,
                                 const ScalarField& g, double t_final, const Vec& start,
                                 long n_paths, uint64_t seed, const WeakOpts& opts) {
    if (n_paths < 1) throw InvalidParam("weak_expectation: n_paths must be >= 1");
    auto sums = weighted_reduction(gs, drift, t_final, start, n_paths, seed, opts,
                                   [&](const ReferencePath& p, const BrownianGrid&) {
                                       return g(p.endpoint());
                                   });
    return self_normalized(sums, n_paths, seed, opts.min_ess_fraction);
}

EstimatorResult krylov_estimate(const GroupStructure& gs, const DriftSpec& drift,
                                const SpaceTimeScalar& f, double p_prime, double q_prime,
                                double t_final, const Vec& start, long n_paths,
                                uint64_t seed, const NormLatticeSpec& norm_spec,
                                const WeakOpts& opts) {
    if (!check_K1(p_prime, q_prime, gs.m(), gs.d()))
        throw InvalidParam("krylov_estimate: (p', q') fails the K_1 sufficient condition");
    double norm = lqp_norm(f, p_prime, q_prime, norm_spec);
    if (!(norm > 0.0)) {
        // f = 0 gives ratio 0 by convention; anything else with zero norm is an error.
        auto probe = f(norm_spec.times.front(), norm_spec.space.point(0));
        if (probe == 0.0) {
            EstimatorResult res;
            res.n_samples = n_paths;
            res.seed = seed;
            return res;
        }
        throw ZeroNorm("krylov_estimate: |f| norm vanished at this resolution");
    }
    auto sums = weighted_reduction(
        gs, drift, t_final, start, n_paths, seed, opts,
        [&](const ReferencePath& p, const BrownianGrid& grid) {
            // left-point time quadrature of f along the path
            double acc = 0.0;
            const double dt = grid.dt();
            for (int j = 0; j < grid.n_steps; ++j)
                acc += f(grid.time_at(j), p.state_at(j)) * dt;
            return acc;
        });
    EstimatorResult res = self_normalized(sums, n_paths, seed, opts.min_ess_fraction);
    res.value /= norm;
    res.std_error /= norm;
    return res;
}

KhasminskiiResult exp_moment_khasminskii(const GroupStructure& gs, const DriftSpec& drift,
                                         const SpaceTimeScalar& f, double lambda,
                                         double t_final, const Vec& start, long n_paths,
                                         uint64_t seed, const WeakOpts& opts) {
    std::vector<double> per_sample;
    auto sums = weighted_reduction(
        gs, drift, t_final, start, n_paths, seed, opts,
        [&](const ReferencePath& p, const BrownianGrid& grid) {
            double acc = 0.0;
            const double dt = grid.dt();
            for (int j = 0; j < grid.n_steps; ++j) {
                double v = f(grid.time_at(j), p.state_at(j));
                if (v < 0.0) throw InvalidParam("exp_moment_khasminskii: f must be >= 0");
                acc += v * dt;
            }
            return std::exp(lambda * acc);
        },
        &per_sample);
    KhasminskiiResult out;
    out.estimate = self_normalized(sums, n_paths, seed, opts.min_ess_fraction);
    // Heavy-tail indicator: contribution of the top 0.1% of weighted samples.
    std::vector<double> contrib(static_cast<size_t>(n_paths));
    double total = 0.0;
    for (long i = 0; i < n_paths; ++i) {
        double c = per_sample[static_cast<size_t>(2 * i)] * per_sample[static_cast<size_t>(2 * i) + 1];
        contrib[static_cast<size_t>(i)] = c;
        total += c;
    }
    long top = std::max<long>(1, n_paths / 1000);
    std::nth_element(contrib.begin(), contrib.begin() + (n_paths - top), contrib.end());
    double top_sum = 0.0;
    for (long i = n_paths - top; i < n_paths; ++i) top_sum += contrib[static_cast<size_t>(i)];
    out.heavy_tail = total > 0.0 && top_sum > 0.5 * total;
    return out;
}

}  // namespace heisim
