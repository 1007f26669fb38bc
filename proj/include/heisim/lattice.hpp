#pragma once

#include <vector>

#include "heisim/group.hpp"

namespace heisim {

// Uniform box lattice in R^n.  Node lattices (cell_centered = false) include
// both box corners and back multilinear interpolation; cell-centered lattices
// are the quadrature grids (points at cell midpoints, weight = cell volume).
struct BoxLattice {
    Vec lo, hi;
    std::vector<int> counts;  // nodes (or cells) per dimension
    bool cell_centered = false;

    int ndim() const { return static_cast<int>(counts.size()); }
    long size() const {
        long s = 1;
        for (int c : counts) s *= c;
        return s;
    }
    double spacing(int k) const {
        return cell_centered ? (hi[k] - lo[k]) / counts[static_cast<size_t>(k)]
                             : (hi[k] - lo[k]) / (counts[static_cast<size_t>(k)] - 1);
    }
    double cell_volume() const {
        double v = 1.0;
        for (int k = 0; k < ndim(); ++k) v *= spacing(k);
        return v;
    }
    void unflatten(long flat, std::vector<int>& idx) const {
        idx.resize(static_cast<size_t>(ndim()));
        for (int k = ndim() - 1; k >= 0; --k) {
            idx[static_cast<size_t>(k)] = static_cast<int>(flat % counts[static_cast<size_t>(k)]);
            flat /= counts[static_cast<size_t>(k)];
        }
    }
    long flatten(const std::vector<int>& idx) const {
        long f = 0;
        for (int k = 0; k < ndim(); ++k) f = f * counts[static_cast<size_t>(k)] + idx[static_cast<size_t>(k)];
        return f;
    }
    Vec point(long flat) const {
        std::vector<int> idx;
        unflatten(flat, idx);
        Vec p(ndim());
        for (int k = 0; k < ndim(); ++k)
            p[k] = cell_centered ? lo[k] + (idx[static_cast<size_t>(k)] + 0.5) * spacing(k)
                                 : lo[k] + idx[static_cast<size_t>(k)] * spacing(k);
        return p;
    }
    bool contains(const Vec& z) const {
        for (int k = 0; k < ndim(); ++k)
            if (z[k] < lo[k] || z[k] > hi[k]) return false;
        return true;
    }
};

BoxLattice make_box_lattice(const Vec& lo, const Vec& hi, const std::vector<int>& counts,
                            bool cell_centered = false);

// Vector-valued field on (time node) x (space node lattice), multilinear in
// space with extension by zero outside the box, linear in time between nodes
// (clamped at the ends).
struct LatticeField {
    BoxLattice lat;              // node lattice
    std::vector<double> times;   // increasing
    int comps = 1;
    std::vector<double> values;  // [time][space][comp]

    long space_size() const { return lat.size(); }
    double& at(int ti, long flat, int c) {
        return values[(static_cast<size_t>(ti) * static_cast<size_t>(space_size()) +
                       static_cast<size_t>(flat)) * static_cast<size_t>(comps) + static_cast<size_t>(c)];
    }
    double at(int ti, long flat, int c) const {
        return values[(static_cast<size_t>(ti) * static_cast<size_t>(space_size()) +
                       static_cast<size_t>(flat)) * static_cast<size_t>(comps) + static_cast<size_t>(c)];
    }

    // Multilinear spatial interpolation at fixed time node.
    void interp_at_node(int ti, const Vec& z, double* out) const;
    // Space-time interpolation.
    void interp(double t, const Vec& z, double* out) const;

    double max_abs() const;
    // Max over nodes of the Euclidean norm across components.
    double sup_vec_norm() const;
};

LatticeField make_lattice_field(const BoxLattice& node_lat, std::vector<double> times,
                                int comps);

}  // namespace heisim
