#pragma once

#include <functional>
#include <string>

#include "heisim/brownian.hpp"
#include "heisim/estimator.hpp"
#include "heisim/group.hpp"

namespace heisim {

using ScalarField = std::function<double(const Vec&)>;

// Reference flow of the driftless SDE: exact per-node evaluation of
//   X_t = x + Theta B_t,
//   (Y_t)_l = y_l + <A_l x, B_t> + int_0^t <A_l Theta B_s, dB_s>,
// with the Ito integral discretized by the left-point rule.  The horizontal
// part carries no integration error at all.
struct ReferencePath {
    const GroupStructure* gs = nullptr;
    const BrownianGrid* grid = nullptr;
    Vec start;
    std::vector<double> states;     // (n_steps+1) x (m+d)
    std::vector<double> ito_cache;  // (n_steps+1) x d

    Vec state_at(int j) const;
    Vec endpoint() const { return state_at(grid->n_steps); }
};

// Start-independent left-point Ito integrals int_0^{t_j} <A_l Theta B, dB>,
// one d-row per node.  With these cached, the flow from any start can be
// evaluated at any node in O(m d); the Q_lambda solver leans on this to share
// one path set across every lattice point and evaluation time.
std::vector<double> flow_ito_integrals(const GroupStructure& gs, const BrownianGrid& grid);

void flow_state_at(const GroupStructure& gs, const Vec& start, const BrownianGrid& grid,
                   const std::vector<double>& ito, int j, Vec& out);

ReferencePath reference_flow(const GroupStructure& gs, const Vec& start,
                             const BrownianGrid& grid);

struct SemigroupOpts {
    int n_steps = 0;          // 0: default rule dt <= t/64
    long chunk_size = 4096;   // reduction chunk (fixed => worker-count independent)
};

inline int default_steps_for(double /*t*/) { return 64; }

// Monte Carlo evaluation of P_t f(z) = E f(X_t^z) over reference-flow
// endpoints.
EstimatorResult semigroup_estimate(const GroupStructure& gs, const ScalarField& f,
                                   double t, const Vec& z, long n_paths, uint64_t seed,
                                   const SemigroupOpts& opts = {});

// Debug dump: one record per node (step, t, B, X, Y) under a fixed header.
std::string path_dump_csv(const ReferencePath& path);

}  // namespace heisim
