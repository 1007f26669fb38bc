#pragma once

#include <functional>

#include "heisim/drift.hpp"
#include "heisim/lattice.hpp"

namespace heisim {

using SpaceTimeScalar = std::function<double(double t, const Vec& z)>;

// Quadrature domain for the mixed norms: cell-centered box lattice in space
// (midpoint rule), trapezoid over `times` in time.
struct NormLatticeSpec {
    BoxLattice space;           // cell-centered
    std::vector<double> times;  // increasing, at least one node
};

NormLatticeSpec make_norm_lattice(const Vec& lo, const Vec& hi,
                                  const std::vector<int>& cells,
                                  const std::vector<double>& times);

// Mixed norm |f|_{L^q_p} = (int_0^T |f_t|_{L^p}^q dt)^{1/q}.
// Throws NonIntegrable when a non-finite value shows up at the configured
// resolution (divergence is reported, never silently truncated).
double lqp_norm(const SpaceTimeScalar& f, double p, double q,
                const NormLatticeSpec& spec);

// Drift convenience: mixed norm of the pointwise magnitude |b_t(z)|.
double lqp_norm(const DriftSpec& b, double p, double q, const NormLatticeSpec& spec);

// Strict inequality 2/q + (m+2d)/p < 1.
bool check_Hstar(double p, double q, int m, int d);

// K_1 sufficient condition 1/q + (m+2d)/(2p) < 1.
bool check_K1(double p, double q, int m, int d);

// Normalizing constant c(d, beta/2) of the fractional Laplacian:
// (-Delta)^{beta/2} f = c * P.V. int (f(z) - f(z+y)) |y|^{-d-beta} dy.
// The unnormalized singular integral evaluated here therefore has Fourier
// multiplier -|xi|^beta / c.
double frac_laplacian_normalization(int d, double beta);

struct FracOpts {
    double tail_radius = 8.0;       // quadrature reach in y'
    double step = 0.0;              // quadrature step; 0 = lattice y-spacing
    bool field_decays_in_y = true;  // enables the analytic tail correction
};

// Unnormalized -(-Delta_y)^{beta/2} f at one point: singular integral
//   int (f(z + (0,y')) - f(z)) |y'|^{-(d+beta)} dy'
// in the symmetrized second-difference form, with a second-order Taylor
// cancellation cell at y' = 0 (cell radius = one lattice spacing) and an
// exact tail term when the field decays in y.  The kernel exponent is d+beta
// (y' ranges over R^d).
double frac_laplacian_y_at(const SpaceTimeScalar& f, double t, const Vec& z, int m,
                           int d, double beta, const FracOpts& opts);

// Same operator evaluated on every node of a space-time lattice.
LatticeField frac_laplacian_y(const SpaceTimeScalar& f, int m, int d, double beta,
                              const BoxLattice& nodes, const std::vector<double>& times,
                              const FracOpts& opts);

// Alternative spectral route: periodified DFT in y per (t, x)-slice, with the
// multiplier -|k|^beta / c(d, beta/2) matching the unnormalized quadrature.
LatticeField frac_laplacian_y_spectral(const SpaceTimeScalar& f, int m, int d,
                                       double beta, const BoxLattice& nodes,
                                       const std::vector<double>& times,
                                       int pad_factor = 4);

// |f|_{H_y^{beta,p,q}} in the equivalent two-term form
// |f|_{L^q_p} + |(-Delta_y)^{beta/2} f|_{L^q_p}.  beta = 0 returns twice the
// mixed norm ((-Delta)^0 = id convention for the two-term sum).
double hy_norm(const SpaceTimeScalar& f, double beta, double p, double q, int m, int d,
               const NormLatticeSpec& spec, const FracOpts& opts = {});

double hy_norm(const DriftSpec& b, double beta, double p, double q,
               const NormLatticeSpec& spec, const FracOpts& opts = {});

}  // namespace heisim
