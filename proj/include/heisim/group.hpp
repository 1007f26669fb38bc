#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace heisim {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Outcome of the hypothesis-(H) check.  `eps_estimate` is the smallest
// coupling constant that makes the cross-term inequality hold over the
// sampled directions (0 on the exact-orthogonality fast path), and
// `lower_bound_32` the resulting uniform lower bound (1-eps) inf_l |G_l|_HS^2
// on |sum_l a_l G_l|_HS^2 / |a|^2.
struct HReport {
    bool passed = false;
    double eps_estimate = 1.0;
    bool exact_orthogonal = false;
    double lower_bound_32 = 0.0;
    long samples_used = 0;
};

// Generalized Heisenberg group on R^{m+d}: horizontal matrix Theta, vertical
// coupling matrices A_l, derived commutator matrices G_l = A_l Theta - Theta* A_l*.
// Immutable after construction; all member operations are pure.
//
// The vertical Ito drift of the driftless diffusion is the point where the
// literature is inconsistent, and we pin the convention here once: the
// process simulated everywhere in this library is the explicit solution
//     X_t = x + Theta B_t,   (Y_t)_l = y_l + <A_l x, B_t> + int_0^t <A_l Theta B_s, dB_s>,
// whose vertical drift is zero.  The numbers tr(Theta A_l) are kept as
// metadata (`z_drift`) because they vanish for every group family used in the
// experiments; they are never added to a simulated path.
class GroupStructure {
  public:
    static GroupStructure build(const Mat& theta, const std::vector<Mat>& a_mats,
                                long h_samples = 100000, uint64_t h_seed = 0x48u);

    // Remark-3.1 family: m = len(a)+1, d = len(a); (A_l)_{1,l+1} = a_l,
    // (A_l)_{l+1,1} = beta_l, Theta = I.
    static GroupStructure remark31(const std::vector<double>& a,
                                   const std::vector<double>& beta,
                                   long h_samples = 100000, uint64_t h_seed = 0x48u);

    // Kohn-Laplacian group on the 3-dimensional Heisenberg group:
    // remark31 with a = 1/2, beta = -1/2.
    static GroupStructure kohn();

    int m() const { return m_; }
    int d() const { return d_; }
    int dim() const { return m_ + d_; }
    const Mat& theta() const { return theta_; }
    const Mat& theta_inv() const { return theta_inv_; }
    const Mat& theta_star_inv() const { return theta_star_inv_; }
    const Mat& a_mat(int l) const { return a_mats_[static_cast<size_t>(l)]; }
    const Mat& g_mat(int l) const { return g_mats_[static_cast<size_t>(l)]; }
    const std::vector<Mat>& a_mats() const { return a_mats_; }
    const std::vector<Mat>& g_mats() const { return g_mats_; }
    const Vec& z_drift() const { return z_drift_; }
    const HReport& h_report() const { return h_report_; }

    // Group product (x,y)*(x',y') = (x+x', y+y'+ <(Theta*)^{-1} A_. x, x'>).
    Vec mul(const Vec& p1, const Vec& p2) const;
    Vec inverse(const Vec& p) const;

    // sigma(x): (m+d) x m.  Top block Theta, row m+l equals (A_l x)^T.
    Mat sigma_at(const Vec& x) const;
    void sigma_at(const Vec& x, Mat& out) const;

    // Left-invariant frame field U_i(z) as a tangent vector in R^{m+d}.
    Vec vector_field(int i, const Vec& z) const;

    // Chord approximation of the generator (1/2) sum_i U_i^2 f at z.
    // Each U_i is applied twice as a nested first difference, which picks up
    // the first-order term coming from the non-constant coefficients.
    double apply_generator(const std::function<double(const Vec&)>& f, const Vec& z,
                           double h = 1e-3) const;

  private:
    GroupStructure() = default;
    int m_ = 0, d_ = 0;
    Mat theta_, theta_inv_, theta_star_inv_;
    std::vector<Mat> a_mats_, g_mats_;
    Vec z_drift_;
    HReport h_report_;
};

// Verifies hypothesis (H) by sampling.  Fast path: when G_l* G_k == 0 exactly
// for all l != k the inequality holds with eps = 0 and no sampling is done.
// Otherwise draws n_samples pairs (a, u) uniform on the unit spheres and
// reports the largest per-sample eps = rhs/lhs needed; passed iff < 1.
HReport check_hypothesis_H(const std::vector<Mat>& g_mats, long n_samples,
                           uint64_t seed = 0x48u);

// Parses a group definition from JSON text: either
//   {"m":2, "d":1, "theta":[...row major...], "a_mats":[[...],...]}
// or the shorthand {"remark31": {"a":[...], "beta":[...]}}.
GroupStructure group_from_json(const std::string& json_text);

}  // namespace heisim
