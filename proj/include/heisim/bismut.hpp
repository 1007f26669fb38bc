#pragma once

#include <vector>

#include "heisim/flow.hpp"

namespace heisim {

// Cameron-Martin direction sampled on the grid nodes.  Two families appear in
// the derivative formula: h_i(s) = s e_i and beta_k(s) = int_0^s G_k B_r dr.
struct CameronMartinDirection {
    enum class Kind { linear_h, quadratic_beta };
    Kind kind = Kind::linear_h;
    int index = 0;  // i for linear_h, k for quadratic_beta
    int m = 0;
    std::vector<double> values;  // (n_steps+1) x m
    const double* node(int j) const { return &values[static_cast<size_t>(j) * m]; }
};

CameronMartinDirection make_linear_h(const BrownianGrid& grid, int i);
CameronMartinDirection make_quadratic_beta(const GroupStructure& gs,
                                           const BrownianGrid& grid, int k);

// Per-path ingredients of the derivative weight at time t for the
// differentiation direction (w, v) at base point x:
//   - covariance matrix Q_t with entries
//       q_lk = int_0^t <G_l* G_k (B_s - Bbar), B_s - Bbar> ds,
//   - shifted direction alpha~ with
//       alpha~_l = v_l - <Theta^{-1} w, A_l x> - (1/t) int_0^t <G_l* Theta^{-1} w, B_s> ds,
//   - closed-form Malliavin derivatives of both along every h_i and beta_k,
//   - the auxiliary path integrals the weight needs.
// ds-integrals use the trapezoid rule, dB-integrals the left-point rule,
// matching the Ito convention of the reference flow.
struct BismutState {
    double t = 0.0;
    Vec w, v;
    Mat q;            // d x d, symmetric PSD
    Vec alpha_tilde;  // d
    double m_weight = 0.0;
    bool flagged = false;  // Q_t near singular; eta-regularized before inversion

    std::vector<Mat> malliavin_q_beta;      // per k: D_{beta_k} Q
    std::vector<Vec> malliavin_alpha_beta;  // per k: D_{beta_k} alpha~
    std::vector<Mat> malliavin_q_h;         // per i: D_{h_i} Q
    std::vector<Vec> malliavin_alpha_h;     // per i: D_{h_i} alpha~

    Vec ito_g;   // d: int_0^t <G_k B, dB>
    Mat j_int;   // d x m, row k: int_0^t G_k B ds
    Vec b_bar;   // m: (1/t) int_0^t B ds
    Vec b_t;     // m: B_t
    Mat q_reg_inv;  // (Q + eta I)^{-1} actually used by the weight
};

struct BismutOpts {
    // Relative Tikhonov floor: eta = eta_rel * trace(Q)/d is added before
    // inversion; the sample is flagged when lambda_min(Q) < eta.
    double eta_rel = 1e-10;
};

Mat compute_Q(const GroupStructure& gs, const BrownianGrid& grid, double t);

Vec compute_alpha_tilde(const GroupStructure& gs, const BrownianGrid& grid, double t,
                        const Vec& w, const Vec& v, const Vec& x);

enum class MalliavinTarget { Q, alpha_tilde };

// Closed-form directional derivative of Q_t or alpha~ along `direction`:
//   D_h alpha~_l = -(1/t) int <G_l* Theta^{-1} w, h_s> ds,
//   D_h q_lk     = int [<G_k (h-hbar), G_l (B-Bbar)> + <G_k (B-Bbar), G_l (h-hbar)>] ds.
// Returns a d x d matrix for Q, a d x 1 column for alpha_tilde.
Mat malliavin_derivative(const GroupStructure& gs, const BrownianGrid& grid, double t,
                         const CameronMartinDirection& direction, MalliavinTarget target,
                         const Vec& w, const Vec& v, const Vec& x);

BismutState compute_bismut_state(const GroupStructure& gs, const BrownianGrid& grid,
                                 double t, const Vec& w, const Vec& v, const Vec& x,
                                 const BismutOpts& opts = {});

// The integration-by-parts weight M_t (six terms).
double compute_M(const GroupStructure& gs, const BrownianGrid& grid, double t,
                 const Vec& w, const Vec& v, const Vec& x, bool* flagged = nullptr,
                 const BismutOpts& opts = {});

// Derivative of the weight with respect to the base point along (w2, v2):
// same alpha~-dependent terms with alpha~ replaced by its (path-independent)
// spatial gradient, and without the (1/t)<Theta^{-1} w, B_t> term.
double directional_m_weight(const GroupStructure& gs, const BismutState& st,
                            const Vec& w2);

struct GradientOpts {
    int n_steps = 0;  // 0: default rule
    long chunk_size = 4096;
    BismutOpts bismut;
};

// Bismut derivative estimator: grad_{w,v} P_t f(z) = E[f(X_t, Y_t) M_t].
EstimatorResult bismut_gradient(const GroupStructure& gs, const ScalarField& f, double t,
                                const Vec& z, const Vec& w, const Vec& v, long n_paths,
                                uint64_t seed, const GradientOpts& opts = {});

// Central-difference oracle with common random numbers on both sides.
EstimatorResult gradient_fd_oracle(const GroupStructure& gs, const ScalarField& f,
                                   double t, const Vec& z, const Vec& w, const Vec& v,
                                   double eps, long n_paths, uint64_t seed,
                                   const GradientOpts& opts = {});

struct SecondGradientOpts {
    long n_inner = 256;
    long budget_cap = 50'000'000;  // outer * inner sample budget
    int n_steps = 0;
    BismutOpts bismut;
};

// Second derivative via the Markov split at t/2:
//   grad_2 grad_1 P_t f = E[(grad_{D flow} P_{t/2} f)(Z_{t/2}) M_{t/2}]
//                       + E[(P_{t/2} f)(Z_{t/2}) grad_2 M_{t/2}],
// where D flow = (w2, v2_l + <A_l w2, B_{t/2}>) is the derivative of the
// explicit flow with respect to its start along (w2, v2).
EstimatorResult second_gradient(const GroupStructure& gs, const ScalarField& f, double t,
                                const Vec& z, const Vec& w1, const Vec& v1, const Vec& w2,
                                const Vec& v2, long n_paths, uint64_t seed,
                                const SecondGradientOpts& opts = {});

}  // namespace heisim
