#pragma once

#include <string>

#include "heisim/drift.hpp"
#include "heisim/flow.hpp"
#include "heisim/lattice.hpp"

namespace heisim {

// Monte Carlo resolvent parameters for Q_lambda.  One set of Brownian paths
// (functionals cached per node) is shared across every lattice point and
// every evaluation time, which keeps the Monte Carlo noise spatially smooth
// and the finite differences of u stable.
struct QLambdaSpec {
    int path_steps = 256;  // uniform path grid on [0, T]
    long n_paths = 96;
    uint64_t seed = 0x5AuL;
};

// (Q_lambda f)_s(x) = int_s^T e^{-lambda (t-s)} P_{t-s} f_t(x) dt on the
// space-time grid of f.  The time quadrature runs over a geometrically
// refined subset of the path-grid nodes (dense near t = s) and integrates the
// exponential kernel exactly against the piecewise-linear interpolant, so
// constants map to c (1 - e^{-lambda (T-s)})/lambda with no quadrature error.
LatticeField apply_q_lambda(const GroupStructure& gs, const LatticeField& f,
                            double lambda, const QLambdaSpec& mc);

// sigma-frame derivative of a lattice field: for each node, the (m+d) x m
// array of central differences of u along the directions sigma(x) e_i with
// step one lattice spacing (one-sided at the box boundary).  Output component
// layout: [comp * m + i].
LatticeField grad_sigma_field(const GroupStructure& gs, const LatticeField& u);

// Space-time solution of the mild fixed-point equation u = Q_lambda {grad_{sigma b} u + sigma b}.
struct MildSolutionGrid {
    double lambda = 0.0;
    LatticeField u;           // comps = m+d, terminal slice identically 0
    LatticeField grad_sigma;  // comps = (m+d)*m
    std::vector<double> increment_history;  // ||u^{k+1} - u^k||_B per sweep
    std::vector<double> ratio_history;      // successive increment ratios
    std::string drift_id;
    QLambdaSpec mc;

    double sup_u() const { return u.sup_vec_norm(); }
    double sup_grad_sigma() const;
    double b_norm() const { return sup_u() + sup_grad_sigma(); }
};

struct PicardOpts {
    double tol = 1e-4;
    int max_iter = 12;
    QLambdaSpec mc;
};

// Picard iteration u^0 = 0, u^{k+1} = Q_lambda {grad_{sigma b} u^k + sigma b}.
// Stops when the ||.||_B increment falls below tol; throws NoContraction when
// the increment ratio stays >= 1 for three consecutive sweeps (raise lambda).
MildSolutionGrid picard_solve_xi(const GroupStructure& gs, const DriftSpec& drift,
                                 double lambda, const BoxLattice& nodes,
                                 const std::vector<double>& times,
                                 const PicardOpts& opts = {});

// Zvonkin map theta_t(z) = z + u_t(z) with the measured full-gradient bound
// and the bi-Lipschitz check record.
struct ZvonkinMap {
    const MildSolutionGrid* source = nullptr;
    double grad_bound = 0.0;  // sup over lattice of the full gradient (Frobenius)
    struct {
        bool checked = false;  // only run when grad_bound <= 1/2
        long pairs = 0;
        long failures = 0;
    } qn3;

    Vec theta(double t, const Vec& z) const;
};

// Builds the map and, when grad_bound <= 1/2, verifies
//   (1/2)|theta(z) - theta(z')| <= |z - z'| <= 2 |theta(z) - theta(z')|
// on `n_pairs` random pairs inside the box (exact assertion, no tolerance).
ZvonkinMap build_zvonkin_map(const MildSolutionGrid& sol, long n_pairs = 1000,
                             uint64_t seed = 0x51uL);

// Discrete residual of the integrated transformed equation along a simulated
// path: sup over grid times of
//   | theta_t(Z_t) - theta_0(Z_0) - int_0^t lambda u_s(Z_s) ds
//     - sum_j [sigma(Z_j) dB_j + grad_{sigma dB_j} u(Z_j)] |.
// The path is taken up to its exit from B(0, cutoff_k).
struct ResidualReport {
    double sup_residual = 0.0;
    bool escaped = false;
    double stop_time = 0.0;
};

ResidualReport transformed_residual(const GroupStructure& gs, double lambda,
                                    const MildSolutionGrid& sol,
                                    const std::vector<double>& states, int last_index,
                                    const BrownianGrid& grid, double cutoff_k);

// Solver checkpoint: JSON header (lambda, grid spec, drift id, iteration
// count) followed by the flat array of u values.
void save_checkpoint(const MildSolutionGrid& sol, const std::string& path);
MildSolutionGrid load_checkpoint(const std::string& path);

}  // namespace heisim
