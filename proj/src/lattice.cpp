#include "heisim/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "heisim/errors.hpp"

namespace heisim {

BoxLattice make_box_lattice(const Vec& lo, const Vec& hi, const std::vector<int>& counts,
                            bool cell_centered) {
    if (lo.size() != hi.size() || static_cast<size_t>(lo.size()) != counts.size())
        throw DimensionMismatch("make_box_lattice: inconsistent dimensions");
    for (int k = 0; k < lo.size(); ++k) {
        if (!(hi[k] > lo[k])) throw InvalidParam("make_box_lattice: need hi > lo");
        int min_count = cell_centered ? 1 : 2;
        if (counts[static_cast<size_t>(k)] < min_count)
            throw InvalidParam("make_box_lattice: too few points per dimension");
    }
    BoxLattice lat;
    lat.lo = lo;
    lat.hi = hi;
    lat.counts = counts;
    lat.cell_centered = cell_centered;
    return lat;
}

LatticeField make_lattice_field(const BoxLattice& node_lat, std::vector<double> times,
                                int comps) {
    if (node_lat.cell_centered)
        throw InvalidParam("make_lattice_field: needs a node lattice");
    LatticeField f;
    f.lat = node_lat;
    f.times = std::move(times);
    f.comps = comps;
    f.values.assign(f.times.size() * static_cast<size_t>(node_lat.size()) *
                        static_cast<size_t>(comps),
                    0.0);
    return f;
}

void LatticeField::interp_at_node(int ti, const Vec& z, double* out) const {
    const int n = lat.ndim();
    for (int c = 0; c < comps; ++c) out[c] = 0.0;
    if (!lat.contains(z)) return;  // extension by zero
    // Locate the cell and the fractional coordinate in each dimension.
    std::vector<int> base(static_cast<size_t>(n));
    std::vector<double> frac(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        double h = lat.spacing(k);
        double s = (z[k] - lat.lo[k]) / h;
        int i = static_cast<int>(std::floor(s));
        int max_base = lat.counts[static_cast<size_t>(k)] - 2;
        if (i > max_base) i = max_base;
        if (i < 0) i = 0;
        base[static_cast<size_t>(k)] = i;
        frac[static_cast<size_t>(k)] = s - i;
    }
    const long corners = 1L << n;
    std::vector<int> idx(static_cast<size_t>(n));
    for (long mask = 0; mask < corners; ++mask) {
        double wgt = 1.0;
        for (int k = 0; k < n; ++k) {
            bool up = (mask >> k) & 1;
            idx[static_cast<size_t>(k)] = base[static_cast<size_t>(k)] + (up ? 1 : 0);
            wgt *= up ? frac[static_cast<size_t>(k)] : 1.0 - frac[static_cast<size_t>(k)];
        }
        if (wgt == 0.0) continue;
        long flat = lat.flatten(idx);
        for (int c = 0; c < comps; ++c) out[c] += wgt * at(ti, flat, c);
    }
}

void LatticeField::interp(double t, const Vec& z, double* out) const {
    const int nt = static_cast<int>(times.size());
    if (nt == 1 || t <= times.front()) {
        interp_at_node(t <= times.front() ? 0 : nt - 1, z, out);
        return;
    }
    if (t >= times.back()) {
        interp_at_node(nt - 1, z, out);
        return;
    }
    int hi_i = static_cast<int>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
    int lo_i = hi_i - 1;
    double span = times[static_cast<size_t>(hi_i)] - times[static_cast<size_t>(lo_i)];
    double a = (t - times[static_cast<size_t>(lo_i)]) / span;
    std::vector<double> v_lo(static_cast<size_t>(comps)), v_hi(static_cast<size_t>(comps));
    interp_at_node(lo_i, z, v_lo.data());
    interp_at_node(hi_i, z, v_hi.data());
    for (int c = 0; c < comps; ++c) out[c] = (1.0 - a) * v_lo[static_cast<size_t>(c)] + a * v_hi[static_cast<size_t>(c)];
}

double LatticeField::max_abs() const {
    double v = 0.0;
    for (double x : values) v = std::max(v, std::abs(x));
    return v;
}

double LatticeField::sup_vec_norm() const {
    double best = 0.0;
    const size_t n_nodes = values.size() / static_cast<size_t>(comps);
    for (size_t j = 0; j < n_nodes; ++j) {
        double s = 0.0;
        for (int c = 0; c < comps; ++c) {
            double x = values[j * static_cast<size_t>(comps) + static_cast<size_t>(c)];
            s += x * x;
        }
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

}  // namespace heisim
