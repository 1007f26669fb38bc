#include "heisim/flow.hpp"

#include <cmath>
#include <sstream>

#include "heisim/errors.hpp"

namespace heisim {

std::vector<double> flow_ito_integrals(const GroupStructure& gs, const BrownianGrid& grid) {
    if (grid.m != gs.m()) throw DimensionMismatch("flow: grid.m must equal gs.m");
    const int m = gs.m();
    const int d = gs.d();
    const int n = grid.n_steps;
    std::vector<double> ito(static_cast<size_t>(n + 1) * d, 0.0);
    // Precompute A_l Theta once; integrand at node j is <(A_l Theta) B_j, dB_j>.
    std::vector<Mat> at(static_cast<size_t>(d));
    for (int l = 0; l < d; ++l) at[static_cast<size_t>(l)] = gs.a_mat(l) * gs.theta();
    Vec bj(m), db(m), tmp(m);
    for (int j = 0; j < n; ++j) {
        for (int c = 0; c < m; ++c) {
            bj[c] = grid.node(j)[c];
            db[c] = grid.step(j)[c];
        }
        for (int l = 0; l < d; ++l) {
            tmp.noalias() = at[static_cast<size_t>(l)] * bj;
            ito[static_cast<size_t>(j + 1) * d + l] =
                ito[static_cast<size_t>(j) * d + l] + tmp.dot(db);
        }
    }
    return ito;
}

void flow_state_at(const GroupStructure& gs, const Vec& start, const BrownianGrid& grid,
                   const std::vector<double>& ito, int j, Vec& out) {
    const int m = gs.m();
    const int d = gs.d();
    out.resize(m + d);
    Vec bj(m);
    for (int c = 0; c < m; ++c) bj[c] = grid.node(j)[c];
    out.head(m) = start.head(m) + gs.theta() * bj;
    for (int l = 0; l < d; ++l)
        out[m + l] = start[m + l] + (gs.a_mat(l) * start.head(m)).dot(bj) +
                     ito[static_cast<size_t>(j) * d + l];
}

ReferencePath reference_flow(const GroupStructure& gs, const Vec& start,
                             const BrownianGrid& grid) {
    if (start.size() != gs.dim())
        throw DimensionMismatch("reference_flow: start must lie in R^{m+d}");
    ReferencePath p;
    p.gs = &gs;
    p.grid = &grid;
    p.start = start;
    p.ito_cache = flow_ito_integrals(gs, grid);
    const int n = grid.n_steps;
    const int dim = gs.dim();
    p.states.assign(static_cast<size_t>(n + 1) * dim, 0.0);
    Vec z(dim);
    for (int j = 0; j <= n; ++j) {
        flow_state_at(gs, start, grid, p.ito_cache, j, z);
        for (int c = 0; c < dim; ++c) p.states[static_cast<size_t>(j) * dim + c] = z[c];
    }
    return p;
}

Vec ReferencePath::state_at(int j) const {
    const int dim = gs->dim();
    Vec z(dim);
    for (int c = 0; c < dim; ++c) z[c] = states[static_cast<size_t>(j) * dim + c];
    return z;
}

EstimatorResult semigroup_estimate(const GroupStructure& gs, const ScalarField& f,
                                   double t, const Vec& z, long n_paths, uint64_t seed,
                                   const SemigroupOpts& opts) {
    if (!(t > 0.0)) throw InvalidParam("semigroup_estimate: t must be positive");
    if (n_paths < 1) throw InvalidParam("semigroup_estimate: n_paths must be >= 1");
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(t);
    MomentSums ms = reduce_moments(
        n_paths,
        [&](long i, bool& /*flag*/) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t, seed,
                                                static_cast<uint64_t>(i));
            auto ito = flow_ito_integrals(gs, grid);
            Vec end(gs.dim());
            flow_state_at(gs, z, grid, ito, n_steps, end);
            double v = f(end);
            if (!std::isfinite(v)) throw NonFinite("semigroup_estimate: f not finite");
            return v;
        },
        opts.chunk_size);
    return estimator_from_moments(ms, seed);
}

std::string path_dump_csv(const ReferencePath& path) {
    const auto& gs = *path.gs;
    const auto& grid = *path.grid;
    std::ostringstream os;
    os.precision(17);
    os << "step,t";
    for (int c = 0; c < gs.m(); ++c) os << ",B" << c + 1;
    for (int c = 0; c < gs.m(); ++c) os << ",X" << c + 1;
    for (int l = 0; l < gs.d(); ++l) os << ",Y" << l + 1;
    os << "\n";
    for (int j = 0; j <= grid.n_steps; ++j) {
        os << j << "," << grid.time_at(j);
        for (int c = 0; c < gs.m(); ++c) os << "," << grid.node(j)[c];
        const double* st = &path.states[static_cast<size_t>(j) * gs.dim()];
        for (int c = 0; c < gs.dim(); ++c) os << "," << st[c];
        os << "\n";
    }
    return os.str();
}

}  // namespace heisim
