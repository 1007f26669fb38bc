#include "heisim/group.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <nlohmann/json.hpp>

#include "heisim/errors.hpp"
#include "heisim/philox.hpp"

namespace heisim {

namespace {

// Uniform point on S^{n-1} via normalized Gaussians.
Vec sphere_sample(int n, uint64_t seed, uint64_t sample, uint32_t base_comp) {
    Vec v(n);
    double norm2 = 0.0;
    // Redraw on the (measure-zero, but float) event of a zero vector.
    for (uint32_t attempt = 0;; ++attempt) {
        for (int i = 0; i < n; ++i)
            v[i] = philox_normal(seed, RngStream::sphere, sample,
                                 attempt, base_comp + static_cast<uint32_t>(i));
        norm2 = v.squaredNorm();
        if (norm2 > 0.0) break;
    }
    return v / std::sqrt(norm2);
}

}  // namespace

HReport check_hypothesis_H(const std::vector<Mat>& g_mats, long n_samples,
                           uint64_t seed) {
    if (n_samples < 1) throw InvalidParam("check_hypothesis_H: n_samples must be >= 1");
    const int d = static_cast<int>(g_mats.size());
    const int m = static_cast<int>(g_mats[0].rows());

    HReport rep;
    double inf_hs2 = INFINITY;
    for (const auto& g : g_mats) inf_hs2 = std::min(inf_hs2, g.squaredNorm());

    // Fast path: G_l* G_k = 0 for all l != k.  The products are evaluated in
    // floating point; structural orthogonality (as in the Remark-3.1 family)
    // yields exact zeros.
    bool ortho = true;
    for (int l = 0; l < d && ortho; ++l)
        for (int k = 0; k < d && ortho; ++k) {
            if (l == k) continue;
            Mat prod = g_mats[static_cast<size_t>(l)].transpose() * g_mats[static_cast<size_t>(k)];
            if (prod.cwiseAbs().maxCoeff() != 0.0) ortho = false;
        }
    if (ortho) {  // vacuously true for d = 1
        rep.passed = true;
        rep.eps_estimate = 0.0;
        rep.exact_orthogonal = true;
        rep.lower_bound_32 = inf_hs2;
        rep.samples_used = 0;
        return rep;
    }

    double eps_max = 0.0;
    for (long s = 0; s < n_samples; ++s) {
        Vec a = sphere_sample(d, seed, static_cast<uint64_t>(s), 0);
        Vec u = sphere_sample(m, seed, static_cast<uint64_t>(s), 64);
        double lhs0 = 0.0;
        std::vector<Vec> gu(static_cast<size_t>(d));
        for (int l = 0; l < d; ++l) {
            gu[static_cast<size_t>(l)] = g_mats[static_cast<size_t>(l)] * u;
            lhs0 += a[l] * a[l] * gu[static_cast<size_t>(l)].squaredNorm();
        }
        double rhs = 0.0;
        for (int l = 0; l < d; ++l)
            for (int k = 0; k < d; ++k) {
                if (l == k) continue;
                rhs += std::abs(a[l] * a[k] * gu[static_cast<size_t>(l)].dot(gu[static_cast<size_t>(k)]));
            }
        // By Cauchy-Schwarz rhs <= (d-1) * lhs0, so lhs0 == 0 forces rhs == 0.
        double eps_s = (lhs0 > 0.0) ? rhs / lhs0 : 0.0;
        eps_max = std::max(eps_max, eps_s);
    }
    rep.eps_estimate = eps_max;
    rep.passed = eps_max < 1.0;
    rep.exact_orthogonal = false;
    rep.lower_bound_32 = rep.passed ? (1.0 - eps_max) * inf_hs2 : 0.0;
    rep.samples_used = n_samples;
    return rep;
}

GroupStructure GroupStructure::build(const Mat& theta, const std::vector<Mat>& a_mats,
                                     long h_samples, uint64_t h_seed) {
    const int m = static_cast<int>(theta.rows());
    if (theta.cols() != m || m < 2)
        throw DimensionMismatch("build_group: theta must be square with m >= 2");
    if (a_mats.empty()) throw DimensionMismatch("build_group: need d >= 1 matrices A_l");
    for (const auto& a : a_mats)
        if (a.rows() != m || a.cols() != m)
            throw DimensionMismatch("build_group: every A_l must be m x m");

    Eigen::JacobiSVD<Mat> svd(theta);
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] < 1e-12 * sv[0])
        throw SingularTheta("build_group: theta is singular or near-singular");

    GroupStructure gs;
    gs.m_ = m;
    gs.d_ = static_cast<int>(a_mats.size());
    gs.theta_ = theta;
    gs.theta_inv_ = theta.inverse();
    gs.theta_star_inv_ = theta.transpose().inverse();
    gs.a_mats_ = a_mats;
    gs.g_mats_.reserve(a_mats.size());
    gs.z_drift_ = Vec(gs.d_);
    double theta_scale = theta.norm();
    for (int l = 0; l < gs.d_; ++l) {
        Mat g = a_mats[static_cast<size_t>(l)] * theta -
                theta.transpose() * a_mats[static_cast<size_t>(l)].transpose();
        if (g.norm() <= 1e-14 * (1.0 + a_mats[static_cast<size_t>(l)].norm() * theta_scale))
            throw DegenerateG("build_group: G_l = A_l Theta - Theta* A_l* vanishes");
        gs.g_mats_.push_back(std::move(g));
        gs.z_drift_[l] = (theta * a_mats[static_cast<size_t>(l)]).trace();
    }
    gs.h_report_ = check_hypothesis_H(gs.g_mats_, h_samples, h_seed);
    return gs;
}

GroupStructure GroupStructure::remark31(const std::vector<double>& a,
                                        const std::vector<double>& beta,
                                        long h_samples, uint64_t h_seed) {
    if (a.size() != beta.size() || a.empty())
        throw InvalidParam("remark31: a and beta must have equal positive length");
    const int d = static_cast<int>(a.size());
    const int m = d + 1;
    Mat theta = Mat::Identity(m, m);
    std::vector<Mat> a_mats;
    a_mats.reserve(a.size());
    for (int l = 0; l < d; ++l) {
        if (a[static_cast<size_t>(l)] == beta[static_cast<size_t>(l)])
            throw InvalidParam("remark31: requires a_l != beta_l");
        Mat al = Mat::Zero(m, m);
        al(0, l + 1) = a[static_cast<size_t>(l)];
        al(l + 1, 0) = beta[static_cast<size_t>(l)];
        a_mats.push_back(std::move(al));
    }
    return build(theta, a_mats, h_samples, h_seed);
}

GroupStructure GroupStructure::kohn() { return remark31({0.5}, {-0.5}); }

Vec GroupStructure::mul(const Vec& p1, const Vec& p2) const {
    if (p1.size() != dim() || p2.size() != dim())
        throw DimensionMismatch("group_mul: points must lie in R^{m+d}");
    Vec out(dim());
    out.head(m_) = p1.head(m_) + p2.head(m_);
    for (int l = 0; l < d_; ++l) {
        Vec corr = theta_star_inv_ * (a_mats_[static_cast<size_t>(l)] * p1.head(m_));
        out[m_ + l] = p1[m_ + l] + p2[m_ + l] + corr.dot(p2.head(m_));
    }
    return out;
}

Vec GroupStructure::inverse(const Vec& p) const {
    if (p.size() != dim()) throw DimensionMismatch("group inverse: wrong dimension");
    Vec out(dim());
    out.head(m_) = -p.head(m_);
    for (int l = 0; l < d_; ++l) {
        Vec corr = theta_star_inv_ * (a_mats_[static_cast<size_t>(l)] * p.head(m_));
        out[m_ + l] = -p[m_ + l] + corr.dot(p.head(m_));
    }
    return out;
}

Mat GroupStructure::sigma_at(const Vec& x) const {
    Mat out(dim(), m_);
    sigma_at(x, out);
    return out;
}

void GroupStructure::sigma_at(const Vec& x, Mat& out) const {
    if (x.size() != m_) throw DimensionMismatch("sigma_at: x must lie in R^m");
    out.resize(dim(), m_);
    out.topRows(m_) = theta_;
    for (int l = 0; l < d_; ++l)
        out.row(m_ + l) = (a_mats_[static_cast<size_t>(l)] * x).transpose();
}

Vec GroupStructure::vector_field(int i, const Vec& z) const {
    if (z.size() != dim()) throw DimensionMismatch("vector_field: wrong dimension");
    if (i < 0 || i >= m_) throw InvalidParam("vector_field: index out of range");
    Vec u = Vec::Zero(dim());
    u.head(m_) = theta_.col(i);
    for (int l = 0; l < d_; ++l)
        u[m_ + l] = (a_mats_[static_cast<size_t>(l)] * z.head(m_))[i];
    return u;
}

double GroupStructure::apply_generator(const std::function<double(const Vec&)>& f,
                                       const Vec& z, double h) const {
    if (h <= 0.0) throw InvalidParam("apply_generator: h must be positive");
    // First difference of f along the frame direction U_i at w.
    auto first_diff = [&](int i, const Vec& w) {
        Vec u = vector_field(i, w);
        double fp = f(w + h * u);
        double fm = f(w - h * u);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NonFinite("apply_generator: f returned a non-finite value");
        return (fp - fm) / (2.0 * h);
    };
    double acc = 0.0;
    for (int i = 0; i < m_; ++i) {
        Vec u = vector_field(i, z);
        double gp = first_diff(i, z + h * u);
        double gm = first_diff(i, z - h * u);
        acc += (gp - gm) / (2.0 * h);
    }
    return 0.5 * acc;
}

GroupStructure group_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigInvalid(std::string("group config: ") + e.what());
    }
    if (j.contains("remark31")) {
        const auto& r = j["remark31"];
        if (!r.contains("a") || !r.contains("beta"))
            throw ConfigInvalid("group config: remark31 needs 'a' and 'beta'");
        return GroupStructure::remark31(r["a"].get<std::vector<double>>(),
                                        r["beta"].get<std::vector<double>>());
    }
    for (const char* key : {"m", "d", "theta", "a_mats"})
        if (!j.contains(key))
            throw ConfigInvalid(std::string("group config: missing key '") + key + "'");
    int m = j["m"].get<int>();
    int d = j["d"].get<int>();
    auto theta_flat = j["theta"].get<std::vector<double>>();
    if (static_cast<int>(theta_flat.size()) != m * m)
        throw ConfigInvalid("group config: theta must have m*m entries (row-major)");
    Mat theta(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) theta(r, c) = theta_flat[static_cast<size_t>(r * m + c)];
    auto mats = j["a_mats"].get<std::vector<std::vector<double>>>();
    if (static_cast<int>(mats.size()) != d)
        throw ConfigInvalid("group config: a_mats must hold d matrices");
    std::vector<Mat> a_mats;
    for (const auto& flat : mats) {
        if (static_cast<int>(flat.size()) != m * m)
            throw ConfigInvalid("group config: each A_l must have m*m entries");
        Mat a(m, m);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) a(r, c) = flat[static_cast<size_t>(r * m + c)];
        a_mats.push_back(std::move(a));
    }
    return GroupStructure::build(theta, a_mats);
}

}  // namespace heisim
