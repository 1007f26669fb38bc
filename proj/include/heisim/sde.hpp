#pragma once

#include <optional>

#include "heisim/drift.hpp"
#include "heisim/flow.hpp"
#include "heisim/girsanov.hpp"
#include "heisim/zvonkin.hpp"

namespace heisim {

// Explicit Euler path of the singular SDE.  The horizontal component is
// rebuilt each step as start.x + Theta B_t + (accumulated drift), so with
// b = 0 it reproduces the reference flow's X bitwise at every node; the
// vertical component is the genuinely discretized part.
struct SdePath {
    std::vector<double> states;  // (last_index+1) x (m+d)
    int last_index = 0;
    std::optional<double> stopped_at;  // first exit from B(0, cutoff); tau_k proxy
    bool nonfinite = false;
    double dt = 0.0;
    double cutoff = 0.0;
    std::string drift_id;
    long clamp_count = 0;
    long steps_taken = 0;

    Vec state(int j, int dim) const {
        Vec z(dim);
        for (int c = 0; c < dim; ++c) z[c] = states[static_cast<size_t>(j) * dim + c];
        return z;
    }
};

struct EmOpts {
    bool clamp = true;  // clamp |b| at 1/sqrt(dt), counting clamped steps
};

// One Euler-Maruyama path: z_{j+1} = z_j + sigma(x_j) b_{t_j}(z_j) dt + sigma(x_j) dB_j.
// (The vertical Ito drift of the reference dynamics is zero under the
// solution convention pinned in group.hpp; tr(Theta A_l) stays metadata.)
SdePath euler_maruyama_singular(const GroupStructure& gs, const DriftSpec& drift,
                                const Vec& start, const BrownianGrid& grid,
                                double cutoff_radius, const EmOpts& opts = {});

// Same-noise mesh-refinement study: for each path, solve at dt and dt/2 on
// the same refined Brownian path and record sup_t of the node difference.
struct UniquenessLevel {
    int level = 0;
    double dt = 0.0;
    double median_sup_diff = 0.0;
    double mean_sup_diff = 0.0;
    long escaped = 0;
    double clamp_fraction = 0.0;
    double transformed_ratio = 0.0;  // median sup |theta(Z)-theta(Z')| / untransformed
};

struct UniquenessReport {
    std::vector<UniquenessLevel> levels;
    double strong_order = 0.0;  // log2 fit of successive medians
    bool transformed = false;
    std::string note;  // scope caveat carried into every report
};

UniquenessReport pathwise_uniqueness_experiment(const GroupStructure& gs,
                                                const DriftSpec& drift, const Vec& start,
                                                int base_steps, double t_final,
                                                int n_levels, long n_paths, uint64_t seed,
                                                double cutoff_radius,
                                                const MildSolutionGrid* zvonkin = nullptr);

// Girsanov (weak) route vs direct Euler-Maruyama route on independent seeds.
struct WeakStrongReport {
    EstimatorResult weak_route;
    EstimatorResult em_route;
    double z_score = 0.0;
};

WeakStrongReport weak_strong_compare(const GroupStructure& gs, const DriftSpec& drift,
                                     const ScalarField& g, double t_final,
                                     const Vec& start, long n_paths, uint64_t seed,
                                     const WeakOpts& opts = {});

}  // namespace heisim
