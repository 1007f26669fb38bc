#pragma once

#include "heisim/drift.hpp"
#include "heisim/flow.hpp"
#include "heisim/norms.hpp"

namespace heisim {

// Exponential Girsanov weight along a reference path:
//   R_n = exp[ int_0^{T ^ T_n} <b_t(Z_t), dB_t> - (1/2) int_0^{T ^ T_n} |b_t(Z_t)|^2 dt ],
// with T_n the first time the running left-point quadrature of |b|^2 reaches
// the truncation level n.  b = 0 gives exactly 1.
double girsanov_weight(const GroupStructure& gs, const DriftSpec& drift,
                       const ReferencePath& path, double truncation_level);

struct WeakOpts {
    int n_steps = 0;  // 0: default rule on T
    double truncation_level = 1e12;
    long chunk_size = 4096;
    double min_ess_fraction = 0.01;
};

// Self-normalized importance-sampling estimate of E_Q g(Z_T) where Q is the
// weak-solution law built by reweighting reference paths:
//   sum_p R_p g_p / sum_p R_p, delta-method standard error.
// Throws DegenerateWeights when the effective sample size drops below
// min_ess_fraction * n_paths.
EstimatorResult weak_expectation(const GroupStructure& gs, const DriftSpec& drift,
                                 const ScalarField& g, double t_final, const Vec& start,
                                 long n_paths, uint64_t seed, const WeakOpts& opts = {});

// Krylov-estimate ratio  E_Q int_0^T f_t(Z_t) dt / |f|_{L^{q'}_{p'}}.
// Requires (p', q') to satisfy the K_1 sufficient condition
// 1/q' + (m+2d)/(2p') < 1.
EstimatorResult krylov_estimate(const GroupStructure& gs, const DriftSpec& drift,
                                const SpaceTimeScalar& f, double p_prime, double q_prime,
                                double t_final, const Vec& start, long n_paths,
                                uint64_t seed, const NormLatticeSpec& norm_spec,
                                const WeakOpts& opts = {});

struct KhasminskiiResult {
    EstimatorResult estimate;
    bool heavy_tail = false;  // top 0.1% of samples carry > 50% of the mean
};

// Monte Carlo exponential moment E_Q exp(lambda int_0^T f_t(Z_t) dt) for
// nonnegative f, with a heavy-tail divergence indicator.
KhasminskiiResult exp_moment_khasminskii(const GroupStructure& gs, const DriftSpec& drift,
                                         const SpaceTimeScalar& f, double lambda,
                                         double t_final, const Vec& start, long n_paths,
                                         uint64_t seed, const WeakOpts& opts = {});

}  // namespace heisim
