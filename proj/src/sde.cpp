#include "heisim/sde.hpp"

#include <algorithm>
#include <cmath>

#include "heisim/errors.hpp"
#include "heisim/parallel.hpp"
#include "heisim/philox.hpp"

namespace heisim {

SdePath euler_maruyama_singular(const GroupStructure& gs, const DriftSpec& drift,
                                const Vec& start, const BrownianGrid& grid,
                                double cutoff_radius, const EmOpts& opts) {
    if (start.size() != gs.dim())
        throw DimensionMismatch("euler_maruyama_singular: start must lie in R^{m+d}");
    if (!(cutoff_radius > start.norm()))
        throw InvalidParam("euler_maruyama_singular: cutoff must exceed |start|");
    const int m = gs.m();
    const int d = gs.d();
    const int dim = gs.dim();
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const double clamp_mag = 1.0 / std::sqrt(dt);

    SdePath path;
    path.dt = dt;
    path.cutoff = cutoff_radius;
    path.drift_id = drift.id();
    path.states.assign(static_cast<size_t>(n + 1) * dim, 0.0);

    Vec z(dim), bval(m), bj(m), db(m);
    Vec horiz_drift = Vec::Zero(m);  // accumulated Theta b dt
    Vec y = start.tail(d);
    auto write_state = [&](int j) {
        for (int c = 0; c < m; ++c) bj[c] = grid.node(j)[c];
        z.head(m) = start.head(m) + gs.theta() * bj + horiz_drift;
        z.tail(d) = y;
        for (int c = 0; c < dim; ++c) path.states[static_cast<size_t>(j) * dim + c] = z[c];
    };
    write_state(0);
    for (int j = 0; j < n; ++j) {
        drift.eval(grid.time_at(j), z, bval);
        double mag = bval.norm();
        if (!std::isfinite(mag)) {
            // Drift blew up inside the run; only clamped evaluations continue.
            if (!opts.clamp) {
                path.nonfinite = true;
                path.stopped_at = grid.time_at(j);
                path.last_index = j;
                path.states.resize(static_cast<size_t>(j + 1) * dim);
                return path;
            }
            // Direction is ill-defined at the exact singularity; freeze drift.
            bval.setZero();
            mag = 0.0;
            ++path.clamp_count;
        } else if (opts.clamp && mag > clamp_mag) {
            bval *= clamp_mag / mag;
            ++path.clamp_count;
        }
        ++path.steps_taken;
        for (int c = 0; c < m; ++c) db[c] = grid.step(j)[c];
        // vertical update with state frozen at the left endpoint
        for (int l = 0; l < d; ++l) {
            Vec alx = gs.a_mat(l) * z.head(m);
            y[l] += alx.dot(bval) * dt + alx.dot(db);
        }
        horiz_drift += (gs.theta() * bval) * dt;
        write_state(j + 1);
        if (z.norm() >= cutoff_radius) {
            path.stopped_at = grid.time_at(j + 1);
            path.last_index = j + 1;
            path.states.resize(static_cast<size_t>(j + 2) * dim);
            return path;
        }
    }
    path.last_index = n;
    return path;
}

UniquenessReport pathwise_uniqueness_experiment(const GroupStructure& gs,
                                                const DriftSpec& drift, const Vec& start,
                                                int base_steps, double t_final,
                                                int n_levels, long n_paths, uint64_t seed,
                                                double cutoff_radius,
                                                const MildSolutionGrid* zvonkin) {
    if (n_levels < 1) throw InvalidParam("pathwise_uniqueness_experiment: n_levels >= 1");
    UniquenessReport rep;
    rep.transformed = zvonkin != nullptr;
    rep.note = "certifies behavior before the cutoff radius only; "
               "the life time beyond it is out of experimental reach";
    const int dim = gs.dim();

    struct LevelAccum {
        std::vector<double> sups;
        std::vector<double> tsups;
        long escaped = 0;
        long clamped_steps = 0;
        long total_steps = 0;
    };
    std::vector<LevelAccum> acc(static_cast<size_t>(n_levels));
    for (auto& a : acc) {
        a.sups.reserve(static_cast<size_t>(n_paths));
        a.tsups.reserve(static_cast<size_t>(n_paths));
    }

    for (long p = 0; p < n_paths; ++p) {
        BrownianGrid coarse = sample_brownian(gs.m(), base_steps, t_final, seed,
                                              static_cast<uint64_t>(p));
        SdePath sol_coarse = euler_maruyama_singular(gs, drift, start, coarse, cutoff_radius);
        for (int lev = 0; lev < n_levels; ++lev) {
            BrownianGrid fine = refine_brownian(coarse);
            SdePath sol_fine = euler_maruyama_singular(gs, drift, start, fine, cutoff_radius);
            LevelAccum& a = acc[static_cast<size_t>(lev)];
            a.clamped_steps += sol_coarse.clamp_count + sol_fine.clamp_count;
            a.total_steps += sol_coarse.steps_taken + sol_fine.steps_taken;
            if (sol_coarse.stopped_at || sol_fine.stopped_at || sol_coarse.nonfinite ||
                sol_fine.nonfinite) {
                ++a.escaped;
            } else {
                double sup = 0.0, tsup = 0.0;
                for (int j = 0; j <= coarse.n_steps; ++j) {
                    Vec zc = sol_coarse.state(j, dim);
                    Vec zf = sol_fine.state(2 * j, dim);
                    sup = std::max(sup, (zc - zf).norm());
                    if (zvonkin) {
                        double t = coarse.time_at(j);
                        Vec uc(dim), uf(dim);
                        zvonkin->u.interp(t, zc, uc.data());
                        zvonkin->u.interp(t, zf, uf.data());
                        tsup = std::max(tsup, (zc + uc - zf - uf).norm());
                    }
                }
                a.sups.push_back(sup);
                if (zvonkin) a.tsups.push_back(tsup);
            }
            coarse = std::move(fine);
            sol_coarse = std::move(sol_fine);
        }
    }

    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
        return v[mid];
    };
    double dt0 = t_final / base_steps;
    for (int lev = 0; lev < n_levels; ++lev) {
        LevelAccum& a = acc[static_cast<size_t>(lev)];
        UniquenessLevel row;
        row.level = lev;
        row.dt = dt0 / std::pow(2.0, lev);
        row.median_sup_diff = median(a.sups);
        double mean = 0.0;
        for (double s : a.sups) mean += s;
        row.mean_sup_diff = a.sups.empty() ? 0.0 : mean / static_cast<double>(a.sups.size());
        row.escaped = a.escaped;
        row.clamp_fraction = a.total_steps
                                 ? static_cast<double>(a.clamped_steps) /
                                       static_cast<double>(a.total_steps)
                                 : 0.0;
        if (zvonkin && row.median_sup_diff > 0.0)
            row.transformed_ratio = median(a.tsups) / row.median_sup_diff;
        rep.levels.push_back(row);
    }
    // empirical strong order from successive medians
    int fits = 0;
    double order = 0.0;
    for (size_t k = 0; k + 1 < rep.levels.size(); ++k) {
        double a = rep.levels[k].median_sup_diff, b = rep.levels[k + 1].median_sup_diff;
        if (a > 0.0 && b > 0.0) {
            order += std::log2(a / b);
            ++fits;
        }
    }
    rep.strong_order = fits ? order / fits : 0.0;
    return rep;
}

WeakStrongReport weak_strong_compare(const GroupStructure& gs, const DriftSpec& drift,
                                     const ScalarField& g, double t_final,
                                     const Vec& start, long n_paths, uint64_t seed,
                                     const WeakOpts& opts) {
    WeakStrongReport rep;
    rep.weak_route = weak_expectation(gs, drift, g, t_final, start, n_paths, seed, opts);
    const int n_steps = opts.n_steps > 0 ? opts.n_steps : default_steps_for(t_final);
    uint64_t em_seed = derive_seed(seed, 0xE31u);
    // Cutoff far beyond the diffusive range so bounded test drifts never hit it.
    double cutoff = 1e6 * (1.0 + start.norm());
    MomentSums ms = reduce_moments(
        n_paths,
        [&](long i, bool& /*flag*/) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t_final, em_seed,
                                                static_cast<uint64_t>(i));
            SdePath path = euler_maruyama_singular(gs, drift, start, grid, cutoff);
            double v = g(path.state(path.last_index, gs.dim()));
            if (!std::isfinite(v)) throw NonFinite("weak_strong_compare: g not finite");
            return v;
        },
        opts.chunk_size);
    rep.em_route = estimator_from_moments(ms, em_seed);
    rep.z_score = z_score(rep.weak_route, rep.em_route);
    return rep;
}

}  // namespace heisim
