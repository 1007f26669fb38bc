#include "heisim/norms.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "heisim/errors.hpp"
#include "heisim/parallel.hpp"

namespace heisim {

namespace {

double sphere_area(int d) {  // |S^{d-1}|
    return 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
}

// Time-trapezoid of S(t)^q over the spec's time nodes, then ^(1/q).
double time_mixed(const std::vector<double>& times, const std::vector<double>& s_vals,
                  double q) {
    if (times.size() < 2) throw InvalidParam("mixed norm: need at least two time nodes");
    double acc = 0.0;
    for (size_t i = 0; i + 1 < times.size(); ++i) {
        double dt = times[i + 1] - times[i];
        acc += 0.5 * dt * (std::pow(s_vals[i], q) + std::pow(s_vals[i + 1], q));
    }
    return std::pow(acc, 1.0 / q);
}

double spatial_lp(const SpaceTimeScalar& f, double t, double p, const BoxLattice& cells) {
    const long n = cells.size();
    const double vol = cells.cell_volume();
    std::vector<double> partial(static_cast<size_t>((n + 8191) / 8192), 0.0);
    parallel_chunks(n, 8192, [&](long c, long b, long e) {
        CompensatedSum acc;
        for (long j = b; j < e; ++j) {
            double v = f(t, cells.point(j));
            if (!std::isfinite(v))
                throw NonIntegrable("lqp_norm: non-finite value at lattice resolution");
            acc.add(std::pow(std::abs(v), p));
        }
        partial[static_cast<size_t>(c)] = acc.value();
    });
    double total = 0.0;
    for (double x : partial) total += x;
    return std::pow(total * vol, 1.0 / p);
}

}  // namespace

NormLatticeSpec make_norm_lattice(const Vec& lo, const Vec& hi,
                                  const std::vector<int>& cells,
                                  const std::vector<double>& times) {
    NormLatticeSpec spec;
    spec.space = make_box_lattice(lo, hi, cells, /*cell_centered=*/true);
    spec.times = times;
    return spec;
}

double lqp_norm(const SpaceTimeScalar& f, double p, double q,
                const NormLatticeSpec& spec) {
    if (p < 1.0 || q < 1.0) throw InvalidParam("lqp_norm: need p, q >= 1");
    std::vector<double> s_vals(spec.times.size());
    for (size_t i = 0; i < spec.times.size(); ++i)
        s_vals[i] = spatial_lp(f, spec.times[i], p, spec.space);
    return time_mixed(spec.times, s_vals, q);
}

double lqp_norm(const DriftSpec& b, double p, double q, const NormLatticeSpec& spec) {
    Vec tmp(b.m());
    return lqp_norm(
        [&](double t, const Vec& z) {
            Vec val = b.eval(t, z);
            return val.norm();
        },
        p, q, spec);
    (void)tmp;
}

bool check_Hstar(double p, double q, int m, int d) {
    if (!(p > 0.0) || !(q > 0.0)) throw InvalidParam("check_Hstar: p, q must be positive");
    return 2.0 / q + static_cast<double>(m + 2 * d) / p < 1.0;
}

bool check_K1(double p, double q, int m, int d) {
    if (!(p > 0.0) || !(q > 0.0)) throw InvalidParam("check_K1: p, q must be positive");
    return 1.0 / q + static_cast<double>(m + 2 * d) / (2.0 * p) < 1.0;
}

double frac_laplacian_normalization(int d, double beta) {
    if (!(beta > 0.0) || !(beta < 2.0))
        throw UnsupportedBeta("fractional Laplacian: beta must lie in (0,2)");
    double s = 0.5 * beta;
    return std::pow(4.0, s) * std::tgamma(0.5 * d + s) /
           (std::pow(M_PI, 0.5 * d) * std::abs(std::tgamma(-s)));
}

double frac_laplacian_y_at(const SpaceTimeScalar& f, double t, const Vec& z, int m,
                           int d, double beta, const FracOpts& opts) {
    if (!(beta > 0.0) || !(beta < 2.0))
        throw UnsupportedBeta("frac_laplacian_y: beta must lie in (0,2)");
    const double h = opts.step;
    if (!(h > 0.0)) throw InvalidParam("frac_laplacian_y: quadrature step must be set");
    const double R = opts.tail_radius;
    const double fz = f(t, z);

    auto shifted = [&](const Vec& yoff) {
        Vec zp = z;
        zp.tail(d) += yoff;
        return f(t, zp);
    };

    double total = 0.0;
    if (d == 1) {
        // Product integration: piecewise-linear g against exact kernel moments,
        // g(u) = f(z+(0,u)) + f(z-(0,u)) - 2 f(z).
        const int n_nodes = std::max(2, static_cast<int>(std::floor(R / h)));
        std::vector<double> g(static_cast<size_t>(n_nodes) + 1, 0.0);
        Vec off(1);
        for (int j = 1; j <= n_nodes; ++j) {
            off[0] = j * h;
            double fp = shifted(off);
            off[0] = -j * h;
            double fm = shifted(off);
            g[static_cast<size_t>(j)] = fp + fm - 2.0 * fz;
        }
        // Taylor cancellation cell [0, h]: g ~ f'' u^2.
        total += g[1] * std::pow(h, -beta) / (2.0 - beta);
        for (int j = 1; j < n_nodes; ++j) {
            double a = j * h, b = (j + 1) * h;
            double m0 = (std::pow(a, -beta) - std::pow(b, -beta)) / beta;
            double m1 = (beta == 1.0) ? std::log(b / a)
                                      : (std::pow(b, 1.0 - beta) - std::pow(a, 1.0 - beta)) /
                                            (1.0 - beta);
            // int_a^b lin(g) u^{-1-beta} du with lin interpolating g_a, g_b
            double wa = (b * m0 - m1) / h;
            double wb = (m1 - a * m0) / h;
            total += wa * g[static_cast<size_t>(j)] + wb * g[static_cast<size_t>(j + 1)];
        }
        if (opts.field_decays_in_y)
            total += -2.0 * fz * std::pow(n_nodes * h, -beta) / beta;
        return total;
    }

    // d >= 2: midpoint lattice sum over |y'| >= h plus the Taylor cell.
    Vec lap_probe = Vec::Zero(d);
    double lap = 0.0;
    for (int l = 0; l < d; ++l) {
        Vec e = Vec::Zero(d);
        e[l] = h;
        lap += (shifted(e) + shifted(-e) - 2.0 * fz) / (h * h);
    }
    total += lap / (2.0 * d) * sphere_area(d) * std::pow(h, 2.0 - beta) / (2.0 - beta);
    (void)lap_probe;

    const int n_side = static_cast<int>(std::floor(R / h));
    std::vector<int> idx(static_cast<size_t>(d), -n_side);
    const double cell = std::pow(h, d);
    Vec yoff(d);
    while (true) {
        double r2 = 0.0;
        for (int l = 0; l < d; ++l) {
            yoff[l] = idx[static_cast<size_t>(l)] * h;
            r2 += yoff[l] * yoff[l];
        }
        double r = std::sqrt(r2);
        if (r >= h && r <= R) {
            double val = 0.5 * (shifted(yoff) + shifted(-yoff) - 2.0 * fz);
            total += val * std::pow(r, -(d + beta)) * cell;
        }
        int l = 0;
        for (; l < d; ++l) {
            if (++idx[static_cast<size_t>(l)] <= n_side) break;
            idx[static_cast<size_t>(l)] = -n_side;
        }
        if (l == d) break;
    }
    if (opts.field_decays_in_y)
        total += -fz * sphere_area(d) * std::pow(R, -beta) / beta;
    return total;
}

LatticeField frac_laplacian_y(const SpaceTimeScalar& f, int m, int d, double beta,
                              const BoxLattice& nodes, const std::vector<double>& times,
                              const FracOpts& opts) {
    FracOpts o = opts;
    if (o.step <= 0.0) o.step = nodes.spacing(m);  // first y dimension
    LatticeField out = make_lattice_field(nodes, times, 1);
    const long n = nodes.size();
    for (size_t ti = 0; ti < times.size(); ++ti) {
        parallel_chunks(n, 256, [&](long, long b, long e) {
            for (long j = b; j < e; ++j)
                out.at(static_cast<int>(ti), j, 0) =
                    frac_laplacian_y_at(f, times[ti], nodes.point(j), m, d, beta, o);
        });
    }
    return out;
}

LatticeField frac_laplacian_y_spectral(const SpaceTimeScalar& f, int m, int d,
                                       double beta, const BoxLattice& nodes,
                                       const std::vector<double>& times, int pad_factor) {
    if (!(beta > 0.0) || !(beta < 2.0))
        throw UnsupportedBeta("frac_laplacian_y_spectral: beta must lie in (0,2)");
    if (d != 1)
        throw InvalidParam("frac_laplacian_y_spectral: implemented for d = 1");
    const double c_norm = frac_laplacian_normalization(d, beta);
    const int ny = nodes.counts[static_cast<size_t>(m)];
    const double hy = nodes.spacing(m);
    const int P = pad_factor * ny;
    const int off = (P - ny) / 2;
    const double y_lo = nodes.lo[m];

    LatticeField out = make_lattice_field(nodes, times, 1);
    // x-slice lattice: all dims except the y one.
    std::vector<int> xcounts(nodes.counts.begin(), nodes.counts.begin() + m);
    long nx = 1;
    for (int c : xcounts) nx *= c;

    std::vector<std::complex<double>> slice(static_cast<size_t>(P));
    std::vector<std::complex<double>> freq(static_cast<size_t>(P));
    for (size_t ti = 0; ti < times.size(); ++ti) {
        for (long xs = 0; xs < nx; ++xs) {
            // decode x index
            std::vector<int> xi(static_cast<size_t>(m));
            long rem = xs;
            for (int k = m - 1; k >= 0; --k) {
                xi[static_cast<size_t>(k)] = static_cast<int>(rem % xcounts[static_cast<size_t>(k)]);
                rem /= xcounts[static_cast<size_t>(k)];
            }
            Vec z(m + 1);
            for (int k = 0; k < m; ++k) z[k] = nodes.lo[k] + xi[static_cast<size_t>(k)] * nodes.spacing(k);
            for (int j = 0; j < P; ++j) {
                z[m] = y_lo + (j - off) * hy;
                slice[static_cast<size_t>(j)] = f(times[ti], z);
            }
            // direct DFT (P is small); forward then multiplier then inverse
            for (int k = 0; k < P; ++k) {
                std::complex<double> acc(0.0, 0.0);
                for (int j = 0; j < P; ++j) {
                    double ang = -2.0 * M_PI * k * j / P;
                    acc += slice[static_cast<size_t>(j)] *
                           std::complex<double>(std::cos(ang), std::sin(ang));
                }
                int ksig = (k <= P / 2) ? k : k - P;
                double xi_k = 2.0 * M_PI * ksig / (P * hy);
                freq[static_cast<size_t>(k)] = acc * (-std::pow(std::abs(xi_k), beta) / c_norm);
            }
            std::vector<int> full(static_cast<size_t>(m + 1));
            for (int k = 0; k < m; ++k) full[static_cast<size_t>(k)] = xi[static_cast<size_t>(k)];
            for (int j = 0; j < ny; ++j) {
                std::complex<double> acc(0.0, 0.0);
                int jj = j + off;
                for (int k = 0; k < P; ++k) {
                    double ang = 2.0 * M_PI * k * jj / P;
                    acc += freq[static_cast<size_t>(k)] *
                           std::complex<double>(std::cos(ang), std::sin(ang));
                }
                full[static_cast<size_t>(m)] = j;
                out.at(static_cast<int>(ti), nodes.flatten(full), 0) = acc.real() / P;
            }
        }
    }
    return out;
}

double hy_norm(const SpaceTimeScalar& f, double beta, double p, double q, int m, int d,
               const NormLatticeSpec& spec, const FracOpts& opts) {
    if (beta == 0.0) return 2.0 * lqp_norm(f, p, q, spec);  // (-Delta)^0 = id
    FracOpts o = opts;
    if (o.step <= 0.0) o.step = spec.space.spacing(m);
    double base = lqp_norm(f, p, q, spec);
    double frac = lqp_norm(
        [&](double t, const Vec& z) { return frac_laplacian_y_at(f, t, z, m, d, beta, o); },
        p, q, spec);
    return base + frac;
}

double hy_norm(const DriftSpec& b, double beta, double p, double q,
               const NormLatticeSpec& spec, const FracOpts& opts) {
    const int m = b.m();
    const int d = b.dim() - m;
    if (beta == 0.0) return 2.0 * lqp_norm(b, p, q, spec);
    FracOpts o = opts;
    o.field_decays_in_y = opts.field_decays_in_y && b.decays_in_y();
    if (o.step <= 0.0) o.step = spec.space.spacing(m);
    double base = lqp_norm(b, p, q, spec);
    // Componentwise fractional derivative, pointwise Euclidean magnitude.
    double frac = lqp_norm(
        [&](double t, const Vec& z) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) {
                double u = frac_laplacian_y_at(
                    [&](double tt, const Vec& zz) { return b.eval(tt, zz)[i]; }, t, z, m, d,
                    beta, o);
                s += u * u;
            }
            return std::sqrt(s);
        },
        p, q, spec);
    return base + frac;
}

}  // namespace heisim
