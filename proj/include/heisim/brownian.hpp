#pragma once

#include <cstdint>
#include <vector>

namespace heisim {

// One discretized m-dimensional Brownian path with cached running integrals.
//
// Node values `cum` are the authoritative data: a freshly sampled grid builds
// them as the sequential prefix sum of the RNG increments, and refinement
// copies the coarse node values bitwise (so coarse nodes survive any number
// of refinements unchanged).  `increments` always equals adjacent node
// differences.
struct BrownianGrid {
    int m = 0;
    int n_steps = 0;
    double t_final = 0.0;
    uint64_t seed = 0;
    uint64_t path_index = 0;
    int level = 0;  // number of refinements applied since sampling

    std::vector<double> increments;     // n_steps x m, row-major
    std::vector<double> cum;            // (n_steps+1) x m; cum[0] = 0
    std::vector<double> time_integral;  // (n_steps+1) x m; trapezoid of int_0^t B ds

    double dt() const { return t_final / n_steps; }
    double time_at(int j) const { return t_final * j / n_steps; }
    const double* node(int j) const { return &cum[static_cast<size_t>(j) * m]; }
    const double* step(int j) const { return &increments[static_cast<size_t>(j) * m]; }
    const double* running_integral(int j) const {
        return &time_integral[static_cast<size_t>(j) * m];
    }

    // Grid-node index of time t; throws OffGridTime when t is not a node.
    int node_index(double t) const;
};

// Draws a fresh grid.  Every increment is addressed by
// (seed, path_index, step, component) through the counter-based generator,
// so regeneration is bit-identical and perturbation studies can reuse noise.
BrownianGrid sample_brownian(int m, int n_steps, double t_final, uint64_t seed,
                             uint64_t path_index = 0);

// Brownian-bridge midpoint insertion: returns a grid with 2 n_steps steps
// whose even nodes equal the input nodes bitwise.  Midpoints are keyed by
// (seed, path_index, refinement level, coarse step), so refining the same
// grid twice gives the same path.
BrownianGrid refine_brownian(const BrownianGrid& grid);

// Rebuilds derived caches from externally supplied node values (test support
// for path-perturbation oracles).
BrownianGrid brownian_from_nodes(int m, double t_final, std::vector<double> cum,
                                 uint64_t seed = 0, uint64_t path_index = 0);

}  // namespace heisim
