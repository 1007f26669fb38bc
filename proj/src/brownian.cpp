#include "heisim/brownian.hpp"

#include <cmath>
#include <cstring>

#include "heisim/errors.hpp"
#include "heisim/philox.hpp"

namespace heisim {

namespace {

void rebuild_derived(BrownianGrid& g) {
    const int m = g.m;
    const int n = g.n_steps;
    g.increments.assign(static_cast<size_t>(n) * m, 0.0);
    g.time_integral.assign(static_cast<size_t>(n + 1) * m, 0.0);
    const double half_dt = 0.5 * g.dt();
    for (int j = 0; j < n; ++j)
        for (int c = 0; c < m; ++c) {
            double prev = g.cum[static_cast<size_t>(j) * m + c];
            double next = g.cum[static_cast<size_t>(j + 1) * m + c];
            g.increments[static_cast<size_t>(j) * m + c] = next - prev;
            g.time_integral[static_cast<size_t>(j + 1) * m + c] =
                g.time_integral[static_cast<size_t>(j) * m + c] + half_dt * (prev + next);
        }
}

}  // namespace

int BrownianGrid::node_index(double t) const {
    double jr = t / dt();
    int j = static_cast<int>(std::lround(jr));
    if (j < 0 || j > n_steps || std::abs(jr - j) > 1e-9 * n_steps)
        throw OffGridTime("time does not lie on the Brownian grid");
    return j;
}

BrownianGrid sample_brownian(int m, int n_steps, double t_final, uint64_t seed,
                             uint64_t path_index) {
    if (m < 1 || n_steps < 1 || !(t_final > 0.0))
        throw InvalidParam("sample_brownian: need m >= 1, n_steps >= 1, t_final > 0");
    BrownianGrid g;
    g.m = m;
    g.n_steps = n_steps;
    g.t_final = t_final;
    g.seed = seed;
    g.path_index = path_index;
    g.cum.assign(static_cast<size_t>(n_steps + 1) * m, 0.0);
    const double sdt = std::sqrt(g.dt());
    for (int j = 0; j < n_steps; ++j)
        for (int c = 0; c < m; ++c) {
            double z = philox_normal(seed, RngStream::increments, path_index,
                                     static_cast<uint32_t>(j), static_cast<uint32_t>(c));
            g.cum[static_cast<size_t>(j + 1) * m + c] =
                g.cum[static_cast<size_t>(j) * m + c] + sdt * z;
        }
    rebuild_derived(g);
    return g;
}

BrownianGrid refine_brownian(const BrownianGrid& grid) {
    BrownianGrid g;
    g.m = grid.m;
    g.n_steps = 2 * grid.n_steps;
    g.t_final = grid.t_final;
    g.seed = grid.seed;
    g.path_index = grid.path_index;
    g.level = grid.level + 1;
    g.cum.assign(static_cast<size_t>(g.n_steps + 1) * g.m, 0.0);
    // Conditional law of the midpoint given the endpoints: mean value average,
    // variance dt/4 where dt is the coarse step.
    const double half_sd = 0.5 * std::sqrt(grid.dt());
    const int m = g.m;
    for (int j = 0; j < grid.n_steps; ++j) {
        const double* lo = grid.node(j);
        const double* hi = grid.node(j + 1);
        for (int c = 0; c < m; ++c) {
            double z = philox_normal(grid.seed, RngStream::bridge, grid.path_index,
                                     static_cast<uint32_t>(j) |
                                         (static_cast<uint32_t>(g.level) << 24),
                                     static_cast<uint32_t>(c));
            g.cum[static_cast<size_t>(2 * j) * m + c] = lo[c];
            g.cum[static_cast<size_t>(2 * j + 1) * m + c] =
                0.5 * (lo[c] + hi[c]) + half_sd * z;
            g.cum[static_cast<size_t>(2 * j + 2) * m + c] = hi[c];
        }
    }
    rebuild_derived(g);
    return g;
}

BrownianGrid brownian_from_nodes(int m, double t_final, std::vector<double> cum,
                                 uint64_t seed, uint64_t path_index) {
    if (m < 1 || cum.size() % static_cast<size_t>(m) != 0 || cum.size() < 2 * static_cast<size_t>(m))
        throw InvalidParam("brownian_from_nodes: bad node array");
    BrownianGrid g;
    g.m = m;
    g.n_steps = static_cast<int>(cum.size() / static_cast<size_t>(m)) - 1;
    g.t_final = t_final;
    g.seed = seed;
    g.path_index = path_index;
    g.cum = std::move(cum);
    rebuild_derived(g);
    return g;
}

}  // namespace heisim
