#pragma once

#include <cmath>
#include <cstdint>

namespace heisim {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Stateless: every draw is addressed by (seed, stream, path, step, component),
// which is what makes common random numbers across finite-difference
// perturbations, mesh refinements and worker counts possible.

struct Philox4x32 {
    uint32_t c0, c1, c2, c3;  // counter
    uint32_t k0, k1;          // key

    static constexpr uint32_t kMulA = 0xD2511F53u;
    static constexpr uint32_t kMulB = 0xCD9E8D57u;
    static constexpr uint32_t kWeylA = 0x9E3779B9u;
    static constexpr uint32_t kWeylB = 0xBB67AE85u;

    static inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
        uint64_t p = static_cast<uint64_t>(a) * b;
        hi = static_cast<uint32_t>(p >> 32);
        lo = static_cast<uint32_t>(p);
    }

    inline void round_once() {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMulA, c0, hi0, lo0);
        mulhilo(kMulB, c2, hi1, lo1);
        uint32_t n0 = hi1 ^ c1 ^ k0;
        uint32_t n1 = lo1;
        uint32_t n2 = hi0 ^ c3 ^ k1;
        uint32_t n3 = lo0;
        c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        k0 += kWeylA; k1 += kWeylB;
    }

    inline void run10() {
        for (int r = 0; r < 10; ++r) round_once();
    }
};

// Stream identifiers keep independent uses of the same (seed, path, step)
// tuple from colliding.
enum class RngStream : uint32_t {
    increments    = 1,  // base Brownian increments
    bridge        = 2,  // Brownian-bridge midpoints (refinement level in `step` high bits)
    sphere        = 3,  // unit-sphere samples for the (H) checker
    zvonkin_pairs = 4,  // random pairs for the bi-Lipschitz check
    generic       = 5,  // scratch uniforms for experiments
};

// One Philox block -> two U(0,1) doubles with 53 random bits each.
inline void philox_uniform2(uint64_t seed, RngStream stream, uint64_t path,
                            uint32_t step, uint32_t component,
                            double& u1, double& u2) {
    Philox4x32 g;
    g.c0 = static_cast<uint32_t>(path);
    g.c1 = static_cast<uint32_t>(path >> 32);
    g.c2 = step;
    g.c3 = (static_cast<uint32_t>(stream) << 24) | (component & 0xFFFFFFu);
    g.k0 = static_cast<uint32_t>(seed);
    g.k1 = static_cast<uint32_t>(seed >> 32);
    g.run10();
    uint64_t a = (static_cast<uint64_t>(g.c0) << 32) | g.c1;
    uint64_t b = (static_cast<uint64_t>(g.c2) << 32) | g.c3;
    // (x >> 11) in [0, 2^53); shift into (0,1) so log() below is safe.
    u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
    u2 = (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draw addressed by coordinates; Box-Muller, cosine branch.
inline double philox_normal(uint64_t seed, RngStream stream, uint64_t path,
                            uint32_t step, uint32_t component) {
    double u1, u2;
    philox_uniform2(seed, stream, path, step, component, u1, u2);
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
}

// Both Box-Muller branches, for callers that want two normals per block.
inline void philox_normal2(uint64_t seed, RngStream stream, uint64_t path,
                           uint32_t step, uint32_t component,
                           double& z1, double& z2) {
    double u1, u2;
    philox_uniform2(seed, stream, path, step, component, u1, u2);
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    z1 = r * std::cos(a);
    z2 = r * std::sin(a);
}

inline double philox_uniform(uint64_t seed, RngStream stream, uint64_t path,
                             uint32_t step, uint32_t component) {
    double u1, u2;
    philox_uniform2(seed, stream, path, step, component, u1, u2);
    (void)u2;
    return u1;
}

// Derives a child seed for nested estimators (inner Monte Carlo loops).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
    // splitmix64 step on seed^tag
    uint64_t z = seed ^ (tag * 0x9E3779B97F4A7C15ull);
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace heisim
