#include "heisim/zvonkin.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "heisim/errors.hpp"
#include "heisim/parallel.hpp"
#include "heisim/philox.hpp"

namespace heisim {

namespace {

// Per-path node caches: B, Theta B and the start-independent Ito integrals.
struct PathCache {
    std::vector<double> b;        // (n+1) x m
    std::vector<double> theta_b;  // (n+1) x m
    std::vector<double> ito;      // (n+1) x d
};

std::vector<PathCache> build_path_caches(const GroupStructure& gs, const QLambdaSpec& mc,
                                         double t_final) {
    std::vector<PathCache> caches(static_cast<size_t>(mc.n_paths));
    const int m = gs.m();
    parallel_chunks(mc.n_paths, 8, [&](long, long lo, long hi) {
        for (long p = lo; p < hi; ++p) {
            BrownianGrid grid = sample_brownian(m, mc.path_steps, t_final, mc.seed,
                                                static_cast<uint64_t>(p));
            PathCache& pc = caches[static_cast<size_t>(p)];
            pc.b = grid.cum;
            pc.ito = flow_ito_integrals(gs, grid);
            pc.theta_b.resize(grid.cum.size());
            Vec bj(m), tb(m);
            for (int j = 0; j <= grid.n_steps; ++j) {
                for (int c = 0; c < m; ++c) bj[c] = grid.node(j)[c];
                tb.noalias() = gs.theta() * bj;
                for (int c = 0; c < m; ++c)
                    pc.theta_b[static_cast<size_t>(j) * m + c] = tb[c];
            }
        }
    });
    return caches;
}

// Geometrically refined elapsed-node indices: dense near 0, sparse later.
std::vector<int> elapsed_indices(int j_max) {
    std::vector<int> idx;
    idx.push_back(0);
    int step = 1;
    int j = 0;
    while (j < j_max) {
        int next = j + step;
        if (next >= j_max) {
            idx.push_back(j_max);
            break;
        }
        idx.push_back(next);
        j = next;
        // grow the stride once past 4 nodes at the current scale
        if (j >= 4 * step) step *= 2;
    }
    return idx;
}

// Exact integration of e^{-lambda tau} against the hat basis of the selected
// nodes: returns one weight per node with sum_j w_j = int_0^{tau_K} e^{-l t} dt.
std::vector<double> exp_hat_weights(const std::vector<double>& tau, double lambda) {
    const size_t n = tau.size();
    std::vector<double> w(n, 0.0);
    for (size_t j = 0; j + 1 < n; ++j) {
        double a = tau[j], L = tau[j + 1] - tau[j];
        double ea = std::exp(-lambda * a);
        double x = lambda * L;
        double i0, i1;  // int_0^L e^{-l(a+u)} du, int_0^L u e^{-l(a+u)} du
        if (x < 1e-5) {
            i0 = ea * L * (1.0 - 0.5 * x + x * x / 6.0);
            i1 = ea * L * L * (0.5 - x / 3.0 + x * x / 8.0);
        } else {
            double ex = std::exp(-x);
            i0 = ea * (1.0 - ex) / lambda;
            i1 = ea * (1.0 - (1.0 + x) * ex) / (lambda * lambda);
        }
        w[j] += i0 - i1 / L;
        w[j + 1] += i1 / L;
    }
    return w;
}

}  // namespace

LatticeField apply_q_lambda(const GroupStructure& gs, const LatticeField& f,
                            double lambda, const QLambdaSpec& mc) {
    if (lambda < 0.0) throw InvalidParam("apply_q_lambda: lambda must be >= 0");
    if (f.lat.ndim() != gs.dim())
        throw DimensionMismatch("apply_q_lambda: field lattice must live in R^{m+d}");
    const double t_final = f.times.back();
    const int m = gs.m();
    const int d = gs.d();
    const int comps = f.comps;
    const double dt_path = t_final / mc.path_steps;

    auto caches = build_path_caches(gs, mc, t_final);

    LatticeField out = make_lattice_field(f.lat, f.times, comps);
    const long n_lat = f.lat.size();

    for (size_t ti = 0; ti < f.times.size(); ++ti) {
        const double s = f.times[ti];
        const double remaining = t_final - s;
        int j_max = static_cast<int>(std::lround(remaining / dt_path));
        if (j_max <= 0) continue;  // terminal slice: integral over empty set
        std::vector<int> idx = elapsed_indices(j_max);
        std::vector<double> tau(idx.size());
        for (size_t k = 0; k < idx.size(); ++k) tau[k] = idx[k] * dt_path;
        std::vector<double> wgt = exp_hat_weights(tau, lambda);

        parallel_chunks(n_lat, 64, [&](long, long lo, long hi) {
            Vec z(gs.dim()), zp(gs.dim());
            std::vector<double> val(static_cast<size_t>(comps));
            std::vector<double> node_mean(static_cast<size_t>(comps));
            std::vector<Vec> alx(static_cast<size_t>(d));
            for (long q = lo; q < hi; ++q) {
                z = f.lat.point(q);
                for (int l = 0; l < d; ++l)
                    alx[static_cast<size_t>(l)] = gs.a_mat(l) * z.head(m);
                std::vector<CompensatedSum> acc(static_cast<size_t>(comps));
                for (size_t k = 0; k < idx.size(); ++k) {
                    if (wgt[k] == 0.0) continue;
                    const int j = idx[k];
                    const double t_eval = s + tau[k];
                    if (j == 0) {
                        // P_0 = identity: the node value itself, MC-free.
                        f.interp(t_eval, z, node_mean.data());
                    } else {
                        for (int c = 0; c < comps; ++c) node_mean[static_cast<size_t>(c)] = 0.0;
                        for (const auto& pc : caches) {
                            const double* bj = &pc.b[static_cast<size_t>(j) * m];
                            const double* tb = &pc.theta_b[static_cast<size_t>(j) * m];
                            for (int c = 0; c < m; ++c) zp[c] = z[c] + tb[c];
                            for (int l = 0; l < d; ++l) {
                                double dot = 0.0;
                                for (int c = 0; c < m; ++c)
                                    dot += alx[static_cast<size_t>(l)][c] * bj[c];
                                zp[m + l] = z[m + l] + dot +
                                            pc.ito[static_cast<size_t>(j) * d + l];
                            }
                            f.interp(t_eval, zp, val.data());
                            for (int c = 0; c < comps; ++c)
                                node_mean[static_cast<size_t>(c)] += val[static_cast<size_t>(c)];
                        }
                        for (int c = 0; c < comps; ++c)
                            node_mean[static_cast<size_t>(c)] /= static_cast<double>(mc.n_paths);
                    }
                    for (int c = 0; c < comps; ++c)
                        acc[static_cast<size_t>(c)].add(wgt[k] * node_mean[static_cast<size_t>(c)]);
                }
                for (int c = 0; c < comps; ++c)
                    out.at(static_cast<int>(ti), q, c) = acc[static_cast<size_t>(c)].value();
            }
        });
    }
    return out;
}

LatticeField grad_sigma_field(const GroupStructure& gs, const LatticeField& u) {
    const int m = gs.m();
    const int comps = u.comps;
    LatticeField out = make_lattice_field(u.lat, u.times, comps * m);
    double h = u.lat.spacing(0);
    for (int k = 1; k < u.lat.ndim(); ++k) h = std::min(h, u.lat.spacing(k));
    const long n_lat = u.lat.size();
    for (size_t ti = 0; ti < u.times.size(); ++ti) {
        parallel_chunks(n_lat, 256, [&](long, long lo, long hi) {
            Vec z(u.lat.ndim()), dir(u.lat.ndim());
            Mat sigma;
            std::vector<double> vp(static_cast<size_t>(comps)), vm(static_cast<size_t>(comps));
            for (long q = lo; q < hi; ++q) {
                z = u.lat.point(q);
                gs.sigma_at(z.head(m), sigma);
                for (int i = 0; i < m; ++i) {
                    dir = sigma.col(i);
                    Vec zp = z + h * dir;
                    Vec zm = z - h * dir;
                    bool okp = u.lat.contains(zp);
                    bool okm = u.lat.contains(zm);
                    double denom;
                    if (okp && okm) {
                        u.interp_at_node(static_cast<int>(ti), zp, vp.data());
                        u.interp_at_node(static_cast<int>(ti), zm, vm.data());
                        denom = 2.0 * h;
                    } else if (okp) {  // one-sided at the boundary
                        u.interp_at_node(static_cast<int>(ti), zp, vp.data());
                        u.interp_at_node(static_cast<int>(ti), z, vm.data());
                        denom = h;
                    } else if (okm) {
                        u.interp_at_node(static_cast<int>(ti), z, vp.data());
                        u.interp_at_node(static_cast<int>(ti), zm, vm.data());
                        denom = h;
                    } else {
                        for (int c = 0; c < comps; ++c) {
                            out.at(static_cast<int>(ti), q, c * m + i) = 0.0;
                        }
                        continue;
                    }
                    for (int c = 0; c < comps; ++c)
                        out.at(static_cast<int>(ti), q, c * m + i) =
                            (vp[static_cast<size_t>(c)] - vm[static_cast<size_t>(c)]) / denom;
                }
            }
        });
    }
    return out;
}

double MildSolutionGrid::sup_grad_sigma() const { return grad_sigma.sup_vec_norm(); }

MildSolutionGrid picard_solve_xi(const GroupStructure& gs, const DriftSpec& drift,
                                 double lambda, const BoxLattice& nodes,
                                 const std::vector<double>& times, const PicardOpts& opts) {
    const int m = gs.m();
    const int dim = gs.dim();
    MildSolutionGrid sol;
    sol.lambda = lambda;
    sol.drift_id = drift.id();
    sol.mc = opts.mc;
    sol.u = make_lattice_field(nodes, times, dim);
    sol.grad_sigma = make_lattice_field(nodes, times, dim * m);

    // sigma b on the grid; reused every sweep.
    LatticeField sigma_b = make_lattice_field(nodes, times, dim);
    const long n_lat = nodes.size();
    for (size_t ti = 0; ti < times.size(); ++ti) {
        parallel_chunks(n_lat, 512, [&](long, long lo, long hi) {
            Vec z(dim), bval(m), sb(dim);
            Mat sigma;
            for (long q = lo; q < hi; ++q) {
                z = nodes.point(q);
                drift.eval(times[ti], z, bval);
                gs.sigma_at(z.head(m), sigma);
                sb.noalias() = sigma * bval;
                for (int c = 0; c < dim; ++c) sigma_b.at(static_cast<int>(ti), q, c) = sb[c];
            }
        });
    }

    int stall = 0;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        // Source g = grad_{sigma b} u + sigma b on the grid.
        LatticeField g = sigma_b;
        if (iter > 0) {
            for (size_t ti = 0; ti < times.size(); ++ti) {
                parallel_chunks(n_lat, 512, [&](long, long lo, long hi) {
                    Vec z(dim), bval(m);
                    for (long q = lo; q < hi; ++q) {
                        z = nodes.point(q);
                        drift.eval(times[ti], z, bval);
                        for (int c = 0; c < dim; ++c) {
                            double acc = 0.0;
                            for (int i = 0; i < m; ++i)
                                acc += sol.grad_sigma.at(static_cast<int>(ti), q, c * m + i) *
                                       bval[i];
                            g.at(static_cast<int>(ti), q, c) += acc;
                        }
                    }
                });
            }
        }
        LatticeField u_next = apply_q_lambda(gs, g, lambda, opts.mc);
        LatticeField grad_next = grad_sigma_field(gs, u_next);

        // || u_next - u ||_B
        double sup_du = 0.0, sup_dg = 0.0;
        for (size_t ti = 0; ti < times.size(); ++ti)
            for (long q = 0; q < n_lat; ++q) {
                double du = 0.0, dg = 0.0;
                for (int c = 0; c < dim; ++c) {
                    double x = u_next.at(static_cast<int>(ti), q, c) -
                               sol.u.at(static_cast<int>(ti), q, c);
                    du += x * x;
                }
                for (int c = 0; c < dim * m; ++c) {
                    double x = grad_next.at(static_cast<int>(ti), q, c) -
                               sol.grad_sigma.at(static_cast<int>(ti), q, c);
                    dg += x * x;
                }
                sup_du = std::max(sup_du, du);
                sup_dg = std::max(sup_dg, dg);
            }
        double inc = std::sqrt(sup_du) + std::sqrt(sup_dg);
        if (!std::isfinite(inc)) throw NonFinite("picard_solve_xi: diverged");
        sol.u = std::move(u_next);
        sol.grad_sigma = std::move(grad_next);
        if (!sol.increment_history.empty()) {
            double ratio = inc / sol.increment_history.back();
            sol.ratio_history.push_back(ratio);
            stall = (ratio >= 1.0) ? stall + 1 : 0;
            if (stall >= 3)
                throw NoContraction("picard_solve_xi: increments not contracting; raise lambda");
        }
        sol.increment_history.push_back(inc);
        if (inc <= opts.tol) break;
    }
    return sol;
}

Vec ZvonkinMap::theta(double t, const Vec& z) const {
    Vec out = z;
    std::vector<double> uval(static_cast<size_t>(source->u.comps));
    source->u.interp(t, z, uval.data());
    for (int c = 0; c < source->u.comps; ++c) out[c] += uval[static_cast<size_t>(c)];
    return out;
}

ZvonkinMap build_zvonkin_map(const MildSolutionGrid& sol, long n_pairs, uint64_t seed) {
    ZvonkinMap map;
    map.source = &sol;

    // Full gradient from node values: central differences along the axes.
    const auto& lat = sol.u.lat;
    const int n = lat.ndim();
    const int comps = sol.u.comps;
    double bound = 0.0;
    std::vector<int> idx(static_cast<size_t>(n));
    for (size_t ti = 0; ti < sol.u.times.size(); ++ti)
        for (long q = 0; q < lat.size(); ++q) {
            lat.unflatten(q, idx);
            double fro = 0.0;
            for (int k = 0; k < n; ++k) {
                int i = idx[static_cast<size_t>(k)];
                int i_lo = std::max(0, i - 1), i_hi = std::min(lat.counts[static_cast<size_t>(k)] - 1, i + 1);
                double span = (i_hi - i_lo) * lat.spacing(k);
                std::vector<int> jj = idx;
                jj[static_cast<size_t>(k)] = i_hi;
                long q_hi = lat.flatten(jj);
                jj[static_cast<size_t>(k)] = i_lo;
                long q_lo = lat.flatten(jj);
                for (int c = 0; c < comps; ++c) {
                    double der = (sol.u.at(static_cast<int>(ti), q_hi, c) -
                                  sol.u.at(static_cast<int>(ti), q_lo, c)) / span;
                    fro += der * der;
                }
            }
            bound = std::max(bound, fro);
        }
    map.grad_bound = std::sqrt(bound);

    if (map.grad_bound <= 0.5) {
        map.qn3.checked = true;
        map.qn3.pairs = n_pairs;
        const int nt = static_cast<int>(sol.u.times.size());
        Vec z1(n), z2(n);
        for (long s = 0; s < n_pairs; ++s) {
            for (int k = 0; k < n; ++k) {
                double u1 = philox_uniform(seed, RngStream::zvonkin_pairs,
                                           static_cast<uint64_t>(s), 0,
                                           static_cast<uint32_t>(2 * k));
                double u2 = philox_uniform(seed, RngStream::zvonkin_pairs,
                                           static_cast<uint64_t>(s), 0,
                                           static_cast<uint32_t>(2 * k + 1));
                z1[k] = lat.lo[k] + u1 * (lat.hi[k] - lat.lo[k]);
                z2[k] = lat.lo[k] + u2 * (lat.hi[k] - lat.lo[k]);
            }
            double ut = philox_uniform(seed, RngStream::zvonkin_pairs,
                                       static_cast<uint64_t>(s), 1, 0);
            double t = sol.u.times[static_cast<size_t>(std::min<long>(
                nt - 1, static_cast<long>(ut * nt)))];
            double dz = (z1 - z2).norm();
            double dth = (map.theta(t, z1) - map.theta(t, z2)).norm();
            if (!(0.5 * dth <= dz && dz <= 2.0 * dth)) ++map.qn3.failures;
        }
    }
    return map;
}

ResidualReport transformed_residual(const GroupStructure& gs, double lambda,
                                    const MildSolutionGrid& sol,
                                    const std::vector<double>& states, int last_index,
                                    const BrownianGrid& grid, double cutoff_k) {
    const int m = gs.m();
    const int dim = gs.dim();
    const double dt = grid.dt();
    ResidualReport rep;

    Vec z0(dim);
    for (int c = 0; c < dim; ++c) z0[c] = states[static_cast<size_t>(c)];
    std::vector<double> uval(static_cast<size_t>(dim));
    sol.u.interp(0.0, z0, uval.data());
    Vec theta0 = z0;
    for (int c = 0; c < dim; ++c) theta0[c] += uval[static_cast<size_t>(c)];

    Vec drift_acc = Vec::Zero(dim);
    Vec noise_acc = Vec::Zero(dim);
    std::vector<double> gval(static_cast<size_t>(dim * m));
    Vec z(dim), db(m);
    Mat sigma;
    for (int j = 0; j <= last_index; ++j) {
        double t = grid.time_at(j);
        for (int c = 0; c < dim; ++c) z[c] = states[static_cast<size_t>(j) * dim + c];
        if (z.norm() >= cutoff_k) {
            rep.escaped = true;
            rep.stop_time = t;
            break;
        }
        // residual at node j against the accumulated sums
        sol.u.interp(t, z, uval.data());
        Vec theta_j = z;
        for (int c = 0; c < dim; ++c) theta_j[c] += uval[static_cast<size_t>(c)];
        double r = (theta_j - theta0 - drift_acc - noise_acc).norm();
        rep.sup_residual = std::max(rep.sup_residual, r);
        rep.stop_time = t;
        if (j == last_index) break;

        // advance the quadratures: drift lambda*u dt, noise sigma dB + grad_{sigma dB} u
        for (int c = 0; c < dim; ++c)
            drift_acc[c] += lambda * uval[static_cast<size_t>(c)] * dt;
        for (int c = 0; c < m; ++c) db[c] = grid.step(j)[c];
        gs.sigma_at(z.head(m), sigma);
        noise_acc += sigma * db;
        sol.grad_sigma.interp(t, z, gval.data());
        for (int c = 0; c < dim; ++c) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += gval[static_cast<size_t>(c * m + i)] * db[i];
            noise_acc[c] += acc;
        }
    }
    return rep;
}

void save_checkpoint(const MildSolutionGrid& sol, const std::string& path) {
    nlohmann::json hdr;
    hdr["magic"] = "zvonkin-checkpoint-v1";
    hdr["lambda"] = sol.lambda;
    hdr["drift_id"] = sol.drift_id;
    hdr["iterations"] = sol.increment_history.size();
    hdr["times"] = sol.u.times;
    hdr["comps"] = sol.u.comps;
    hdr["counts"] = sol.u.lat.counts;
    hdr["lo"] = std::vector<double>(sol.u.lat.lo.data(), sol.u.lat.lo.data() + sol.u.lat.lo.size());
    hdr["hi"] = std::vector<double>(sol.u.lat.hi.data(), sol.u.lat.hi.data() + sol.u.lat.hi.size());
    hdr["increments"] = sol.increment_history;
    hdr["ratios"] = sol.ratio_history;
    std::string h = hdr.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    uint64_t hlen = h.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    uint64_t n = sol.u.values.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(sol.u.values.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
}

MildSolutionGrid load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json hdr = nlohmann::json::parse(h);
    if (hdr.value("magic", "") != std::string("zvonkin-checkpoint-v1"))
        throw std::runtime_error("load_checkpoint: bad magic");
    MildSolutionGrid sol;
    sol.lambda = hdr["lambda"].get<double>();
    sol.drift_id = hdr["drift_id"].get<std::string>();
    sol.increment_history = hdr["increments"].get<std::vector<double>>();
    sol.ratio_history = hdr["ratios"].get<std::vector<double>>();
    auto lo_v = hdr["lo"].get<std::vector<double>>();
    auto hi_v = hdr["hi"].get<std::vector<double>>();
    Vec lo(static_cast<int>(lo_v.size())), hi(static_cast<int>(hi_v.size()));
    for (size_t i = 0; i < lo_v.size(); ++i) {
        lo[static_cast<int>(i)] = lo_v[i];
        hi[static_cast<int>(i)] = hi_v[i];
    }
    BoxLattice lat = make_box_lattice(lo, hi, hdr["counts"].get<std::vector<int>>());
    sol.u = make_lattice_field(lat, hdr["times"].get<std::vector<double>>(),
                               hdr["comps"].get<int>());
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (n != sol.u.values.size()) throw std::runtime_error("load_checkpoint: size mismatch");
    is.read(reinterpret_cast<char*>(sol.u.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    return sol;
}

}  // namespace heisim
