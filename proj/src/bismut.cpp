#include "heisim/bismut.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "heisim/errors.hpp"
#include "heisim/philox.hpp"

namespace heisim {

namespace {

// Trapezoid weights on the uniform grid restricted to nodes 0..jt.
inline double trapz_weight(int j, int jt, double dt) {
    return (j == 0 || j == jt) ? 0.5 * dt : dt;
}

struct PathSlice {
    int jt;
    double t;
    double dt;
    Vec b_bar;                  // (1/t) int B ds
    std::vector<Vec> centered;  // B_j - b_bar for j = 0..jt
    Vec b_t;
};

PathSlice make_slice(const GroupStructure& gs, const BrownianGrid& grid, double t) {
    if (grid.m != gs.m()) throw DimensionMismatch("bismut: grid.m must equal gs.m");
    PathSlice s;
    s.jt = grid.node_index(t);
    if (s.jt == 0) throw InvalidParam("bismut: t must be positive");
    s.t = t;
    s.dt = grid.dt();
    const int m = gs.m();
    s.b_bar = Vec(m);
    for (int c = 0; c < m; ++c) s.b_bar[c] = grid.running_integral(s.jt)[c] / t;
    s.centered.resize(static_cast<size_t>(s.jt) + 1);
    for (int j = 0; j <= s.jt; ++j) {
        Vec& cj = s.centered[static_cast<size_t>(j)];
        cj.resize(m);
        for (int c = 0; c < m; ++c) cj[c] = grid.node(j)[c] - s.b_bar[c];
    }
    s.b_t = Vec(m);
    for (int c = 0; c < m; ++c) s.b_t[c] = grid.node(s.jt)[c];
    return s;
}

Mat q_from_slice(const GroupStructure& gs, const PathSlice& s) {
    const int d = gs.d();
    Mat q = Mat::Zero(d, d);
    std::vector<Vec> gc(static_cast<size_t>(d));
    for (int j = 0; j <= s.jt; ++j) {
        double wj = trapz_weight(j, s.jt, s.dt);
        for (int k = 0; k < d; ++k)
            gc[static_cast<size_t>(k)] = gs.g_mat(k) * s.centered[static_cast<size_t>(j)];
        for (int l = 0; l < d; ++l)
            for (int k = l; k < d; ++k)
                q(l, k) += wj * gc[static_cast<size_t>(l)].dot(gc[static_cast<size_t>(k)]);
    }
    for (int l = 0; l < d; ++l)
        for (int k = 0; k < l; ++k) q(l, k) = q(k, l);
    return q;
}

// D_h Q for one direction given its centered node values e_j = h_j - hbar.
Mat dq_from_direction(const GroupStructure& gs, const PathSlice& s,
                      const std::vector<Vec>& e) {
    const int d = gs.d();
    Mat dq = Mat::Zero(d, d);
    std::vector<Vec> gc(static_cast<size_t>(d)), ge(static_cast<size_t>(d));
    for (int j = 0; j <= s.jt; ++j) {
        double wj = trapz_weight(j, s.jt, s.dt);
        for (int k = 0; k < d; ++k) {
            gc[static_cast<size_t>(k)] = gs.g_mat(k) * s.centered[static_cast<size_t>(j)];
            ge[static_cast<size_t>(k)] = gs.g_mat(k) * e[static_cast<size_t>(j)];
        }
        for (int l = 0; l < d; ++l)
            for (int k = 0; k < d; ++k)
                dq(l, k) += wj * (ge[static_cast<size_t>(k)].dot(gc[static_cast<size_t>(l)]) +
                                  gc[static_cast<size_t>(k)].dot(ge[static_cast<size_t>(l)]));
    }
    return dq;
}

// Centered direction values h_j - hbar on nodes 0..jt.
std::vector<Vec> centered_direction(const CameronMartinDirection& dir, const PathSlice& s) {
    const int m = dir.m;
    Vec hbar = Vec::Zero(m);
    for (int j = 0; j <= s.jt; ++j) {
        double wj = trapz_weight(j, s.jt, s.dt);
        for (int c = 0; c < m; ++c) hbar[c] += wj * dir.node(j)[c];
    }
    hbar /= s.t;
    std::vector<Vec> e(static_cast<size_t>(s.jt) + 1);
    for (int j = 0; j <= s.jt; ++j) {
        Vec& ej = e[static_cast<size_t>(j)];
        ej.resize(m);
        for (int c = 0; c < m; ++c) ej[c] = dir.node(j)[c] - hbar[c];
    }
    return e;
}

Vec dalpha_from_direction(const GroupStructure& gs, const PathSlice& s,
                          const CameronMartinDirection& dir, const Vec& w) {
    const int d = gs.d();
    const int m = gs.m();
    Vec theta_inv_w = gs.theta_inv() * w;
    Vec h_int = Vec::Zero(m);  // int_0^t h_s ds
    for (int j = 0; j <= s.jt; ++j) {
        double wj = trapz_weight(j, s.jt, s.dt);
        for (int c = 0; c < m; ++c) h_int[c] += wj * dir.node(j)[c];
    }
    Vec da(d);
    for (int l = 0; l < d; ++l)
        da[l] = -theta_inv_w.dot(gs.g_mat(l) * h_int) / s.t;
    return da;
}

// alpha~-dependent part of the weight shared by M and its spatial gradient:
// a is alpha~ (or its constant gradient), da_* its Malliavin derivatives.
double weight_terms(const GroupStructure& gs, const BismutState& st, const Vec& a,
                    const std::vector<Vec>* da_beta, const std::vector<Vec>* da_h) {
    const int d = gs.d();
    const int m = gs.m();
    const Mat& qinv = st.q_reg_inv;
    Vec r = qinv * a;
    double total = 0.0;
    for (int k = 0; k < d; ++k) total += r[k] * st.ito_g[k];
    for (int k = 0; k < d; ++k) {
        Vec dk = -(qinv * (st.malliavin_q_beta[static_cast<size_t>(k)] * r));
        if (da_beta) dk += qinv * (*da_beta)[static_cast<size_t>(k)];
        total -= dk[k];
    }
    for (int k = 0; k < d; ++k)
        total -= r[k] / st.t * st.j_int.row(k).dot(st.b_t);
    for (int i = 0; i < m; ++i) {
        Vec di = -(qinv * (st.malliavin_q_h[static_cast<size_t>(i)] * r));
        if (da_h) di += qinv * (*da_h)[static_cast<size_t>(i)];
        for (int k = 0; k < d; ++k) total += di[k] / st.t * st.j_int(k, i);
    }
    for (int k = 0; k < d; ++k)
        total += 0.5 * st.t * r[k] * gs.g_mat(k).trace();
    return total;
}

}  // namespace

CameronMartinDirection make_linear_h(const BrownianGrid& grid, int i) {
    if (i < 0 || i >= grid.m) throw InvalidParam("make_linear_h: bad component");
    CameronMartinDirection dir;
    dir.kind = CameronMartinDirection::Kind::linear_h;
    dir.index = i;
    dir.m = grid.m;
    dir.values.assign(static_cast<size_t>(grid.n_steps + 1) * grid.m, 0.0);
    for (int j = 0; j <= grid.n_steps; ++j)
        dir.values[static_cast<size_t>(j) * grid.m + i] = grid.time_at(j);
    return dir;
}

CameronMartinDirection make_quadratic_beta(const GroupStructure& gs,
                                           const BrownianGrid& grid, int k) {
    if (k < 0 || k >= gs.d()) throw InvalidParam("make_quadratic_beta: bad index");
    if (grid.m != gs.m()) throw GridMismatch("make_quadratic_beta: grid.m != gs.m");
    CameronMartinDirection dir;
    dir.kind = CameronMartinDirection::Kind::quadratic_beta;
    dir.index = k;
    dir.m = grid.m;
    const int m = grid.m;
    dir.values.assign(static_cast<size_t>(grid.n_steps + 1) * m, 0.0);
    const double half_dt = 0.5 * grid.dt();
    Vec prev = Vec::Zero(m), cur(m), bj(m);
    for (int j = 0; j < grid.n_steps; ++j) {
        for (int c = 0; c < m; ++c) bj[c] = grid.node(j)[c];
        Vec g_lo = gs.g_mat(k) * bj;
        for (int c = 0; c < m; ++c) bj[c] = grid.node(j + 1)[c];
        Vec g_hi = gs.g_mat(k) * bj;
        for (int c = 0; c < m; ++c) {
            dir.values[static_cast<size_t>(j + 1) * m + c] =
                dir.values[static_cast<size_t>(j) * m + c] + half_dt * (g_lo[c] + g_hi[c]);
        }
    }
    return dir;
}

Mat compute_Q(const GroupStructure& gs, const BrownianGrid& grid, double t) {
    PathSlice s = make_slice(gs, grid, t);
    return q_from_slice(gs, s);
}

Vec compute_alpha_tilde(const GroupStructure& gs, const BrownianGrid& grid, double t,
                        const Vec& w, const Vec& v, const Vec& x) {
    PathSlice s = make_slice(gs, grid, t);
    const int d = gs.d();
    Vec theta_inv_w = gs.theta_inv() * w;
    Vec b_int(gs.m());  // int_0^t B ds (cached trapezoid)
    for (int c = 0; c < gs.m(); ++c) b_int[c] = grid.running_integral(s.jt)[c];
    Vec alpha(d);
    for (int l = 0; l < d; ++l)
        alpha[l] = v[l] - theta_inv_w.dot(gs.a_mat(l) * x) -
                   theta_inv_w.dot(gs.g_mat(l) * b_int) / t;
    return alpha;
}

Mat malliavin_derivative(const GroupStructure& gs, const BrownianGrid& grid, double t,
                         const CameronMartinDirection& direction, MalliavinTarget target,
                         const Vec& w, const Vec& /*v*/, const Vec& /*x*/) {
    if (direction.m != grid.m ||
        direction.values.size() != static_cast<size_t>(grid.n_steps + 1) * grid.m)
        throw GridMismatch("malliavin_derivative: direction not on this grid");
    PathSlice s = make_slice(gs, grid, t);
    if (target == MalliavinTarget::Q) {
        auto e = centered_direction(direction, s);
        return dq_from_direction(gs, s, e);
    }
    return dalpha_from_direction(gs, s, direction, w);
}

BismutState compute_bismut_state(const GroupStructure& gs, const BrownianGrid& grid,
                                 double t, const Vec& w, const Vec& v, const Vec& x,
                                 const BismutOpts& opts) {
    if (w.size() != gs.m() || v.size() != gs.d() || x.size() != gs.m())
        throw DimensionMismatch("compute_bismut_state: bad direction/base dimensions");
    PathSlice s = make_slice(gs, grid, t);
    const int d = gs.d();
    const int m = gs.m();

    BismutState st;
    st.t = t;
    st.w = w;
    st.v = v;
    st.q = q_from_slice(gs, s);
    st.alpha_tilde = compute_alpha_tilde(gs, grid, t, w, v, x);
    st.b_bar = s.b_bar;
    st.b_t = s.b_t;

    // int_0^t <G_k B, dB> (left point) and int_0^t G_k B ds (trapezoid; the
    // latter is G_k applied to the cached running integral).
    st.ito_g = Vec::Zero(d);
    Vec bj(m), db(m);
    for (int j = 0; j < s.jt; ++j) {
        for (int c = 0; c < m; ++c) {
            bj[c] = grid.node(j)[c];
            db[c] = grid.step(j)[c];
        }
        for (int k = 0; k < d; ++k) st.ito_g[k] += (gs.g_mat(k) * bj).dot(db);
    }
    Vec b_int(m);
    for (int c = 0; c < m; ++c) b_int[c] = grid.running_integral(s.jt)[c];
    st.j_int = Mat(d, m);
    for (int k = 0; k < d; ++k) st.j_int.row(k) = (gs.g_mat(k) * b_int).transpose();

    st.malliavin_q_beta.resize(static_cast<size_t>(d));
    st.malliavin_alpha_beta.resize(static_cast<size_t>(d));
    for (int k = 0; k < d; ++k) {
        auto beta = make_quadratic_beta(gs, grid, k);
        auto e = centered_direction(beta, s);
        st.malliavin_q_beta[static_cast<size_t>(k)] = dq_from_direction(gs, s, e);
        st.malliavin_alpha_beta[static_cast<size_t>(k)] = dalpha_from_direction(gs, s, beta, w);
    }
    st.malliavin_q_h.resize(static_cast<size_t>(m));
    st.malliavin_alpha_h.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        auto h = make_linear_h(grid, i);
        auto e = centered_direction(h, s);
        st.malliavin_q_h[static_cast<size_t>(i)] = dq_from_direction(gs, s, e);
        st.malliavin_alpha_h[static_cast<size_t>(i)] = dalpha_from_direction(gs, s, h, w);
    }

    // Regularize before inversion; Q_t is a.s. invertible but ill-conditioned
    // for small t.
    double eta = opts.eta_rel * st.q.trace() / d;
    Eigen::SelfAdjointEigenSolver<Mat> es(st.q);
    double lambda_min = es.eigenvalues()[0];
    st.flagged = !(lambda_min >= eta) || !(eta > 0.0);
    Mat q_reg = st.q + eta * Mat::Identity(d, d);
    st.q_reg_inv = q_reg.inverse();

    st.m_weight = (gs.theta_inv() * w).dot(st.b_t) / t +
                  weight_terms(gs, st, st.alpha_tilde, &st.malliavin_alpha_beta,
                               &st.malliavin_alpha_h);
    return st;
}

double compute_M(const GroupStructure& gs, const BrownianGrid& grid, double t,
                 const Vec& w, const Vec& v, const Vec& x, bool* flagged,
                 const BismutOpts& opts) {
    BismutState st = compute_bismut_state(gs, grid, t, w, v, x, opts);
    if (flagged) *flagged = st.flagged;
    return st.m_weight;
}

double directional_m_weight(const GroupStructure& gs, const BismutState& st,
                            const Vec& w2) {
    const int d = gs.d();
    Vec theta_inv_w = gs.theta_inv() * st.w;
    Vec grad_alpha(d);
    for (int l = 0; l < d; ++l)
        grad_alpha[l] = -theta_inv_w.dot(gs.a_mat(l) * w2);
    // grad alpha~ is path-independent, so its own Malliavin derivatives vanish.
    return weight_terms(gs, st, grad_alpha, nullptr, nullptr);
}

EstimatorResult bismut_gradient(const GroupStructure& gs, const ScalarField& f, double t,
                                const Vec& z, const Vec& w, const Vec& v, long n_paths,
                                uint64_t seed, const GradientOpts& opts) {
    if (!(t > 0.0)) throw InvalidParam("bismut_gradient: t must be positive");
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(t);
    Vec x = z.head(gs.m());
    MomentSums ms = reduce_moments(
        n_paths,
        [&](long i, bool& flag) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t, seed,
                                                static_cast<uint64_t>(i));
            BismutState st = compute_bismut_state(gs, grid, t, w, v, x, opts.bismut);
            flag = st.flagged;
            auto ito = flow_ito_integrals(gs, grid);
            Vec end(gs.dim());
            flow_state_at(gs, z, grid, ito, n_steps, end);
            double fv = f(end);
            if (!std::isfinite(fv) || !std::isfinite(st.m_weight))
                throw NonFinite("bismut_gradient: non-finite sample");
            return fv * st.m_weight;
        },
        opts.chunk_size);
    return estimator_from_moments(ms, seed);
}

EstimatorResult gradient_fd_oracle(const GroupStructure& gs, const ScalarField& f,
                                   double t, const Vec& z, const Vec& w, const Vec& v,
                                   double eps, long n_paths, uint64_t seed,
                                   const GradientOpts& opts) {
    if (!(eps > 0.0)) throw InvalidParam("gradient_fd_oracle: eps must be positive");
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(t);
    Vec dir(gs.dim());
    dir.head(gs.m()) = w;
    dir.tail(gs.d()) = v;
    Vec zp = z + eps * dir;
    Vec zm = z - eps * dir;
    MomentSums ms = reduce_moments(
        n_paths,
        [&](long i, bool& /*flag*/) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t, seed,
                                                static_cast<uint64_t>(i));
            auto ito = flow_ito_integrals(gs, grid);
            Vec end(gs.dim());
            flow_state_at(gs, zp, grid, ito, n_steps, end);
            double fp = f(end);
            flow_state_at(gs, zm, grid, ito, n_steps, end);
            double fm = f(end);
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NonFinite("gradient_fd_oracle: non-finite sample");
            return (fp - fm) / (2.0 * eps);
        },
        opts.chunk_size);
    return estimator_from_moments(ms, seed);
}

EstimatorResult second_gradient(const GroupStructure& gs, const ScalarField& f, double t,
                                const Vec& z, const Vec& w1, const Vec& v1, const Vec& w2,
                                const Vec& v2, long n_paths, uint64_t seed,
                                const SecondGradientOpts& opts) {
    if (!(t > 0.0)) throw InvalidParam("second_gradient: t must be positive");
    if (n_paths * opts.n_inner > opts.budget_cap)
        throw BudgetExceeded("second_gradient: outer*inner exceeds budget cap");
    const double th = 0.5 * t;
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(th);
    Vec x = z.head(gs.m());
    GradientOpts inner_opts;
    inner_opts.n_steps = n_steps;
    inner_opts.bismut = opts.bismut;
    SemigroupOpts sg_opts;
    sg_opts.n_steps = n_steps;
    MomentSums ms = reduce_moments(
        n_paths,
        [&](long i, bool& flag) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, th, seed,
                                                static_cast<uint64_t>(i));
            BismutState st = compute_bismut_state(gs, grid, th, w1, v1, x, opts.bismut);
            flag = st.flagged;
            auto ito = flow_ito_integrals(gs, grid);
            Vec z_half(gs.dim());
            flow_state_at(gs, z, grid, ito, grid.n_steps, z_half);
            // Derivative of the flow with respect to its start along (w2, v2).
            Vec v_flow(gs.d());
            for (int l = 0; l < gs.d(); ++l)
                v_flow[l] = v2[l] + (gs.a_mat(l) * w2).dot(st.b_t);
            uint64_t inner_seed = derive_seed(seed, static_cast<uint64_t>(i) + 1);
            EstimatorResult g_half = bismut_gradient(gs, f, th, z_half, w2, v_flow,
                                                     opts.n_inner, inner_seed, inner_opts);
            EstimatorResult p_half = semigroup_estimate(gs, f, th, z_half, opts.n_inner,
                                                        inner_seed, sg_opts);
            double grad_m = directional_m_weight(gs, st, w2);
            double val = g_half.value * st.m_weight + p_half.value * grad_m;
            if (!std::isfinite(val)) throw NonFinite("second_gradient: non-finite sample");
            return val;
        },
        4096);
    return estimator_from_moments(ms, seed);
}

}  // namespace heisim
