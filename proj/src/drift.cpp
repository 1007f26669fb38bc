#include "heisim/drift.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "heisim/errors.hpp"

namespace heisim {

Vec DriftSpec::eval(double t, const Vec& z) const {
    Vec out(m_);
    eval(t, z, out);
    return out;
}

void DriftSpec::eval(double t, const Vec& z, Vec& out) const {
    if (z.size() != dim_) throw DimensionMismatch("DriftSpec::eval: point dimension");
    out.setZero(m_);
    if (zero_) return;
    if (std::isfinite(support_radius_) && (z - center_).norm() > support_radius_) return;
    if (std::isfinite(truncation_) && z.norm() > truncation_) return;
    if (form_ == Form::closed_form) {
        fn_(t, z, out);
    } else {
        field_->interp(t, z, out.data());
    }
}

DriftSpec DriftSpec::zero(int m, int d) {
    DriftSpec b;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = Vec::Zero(m + d);
    b.zero_ = true;
    b.id_ = "zero";
    b.lqp_norm_cache = 0.0;
    b.hy_half_norm_cache = 0.0;
    return b;
}

DriftSpec DriftSpec::constant(int m, int d, const Vec& value) {
    if (value.size() != m) throw DimensionMismatch("constant drift: value must be in R^m");
    DriftSpec b;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = Vec::Zero(m + d);
    b.zero_ = false;
    b.decays_in_y_ = false;
    std::ostringstream id;
    id << "constant[" << value.transpose() << "]";
    b.id_ = id.str();
    Vec v = value;
    b.fn_ = [v](double, const Vec&, Vec& out) { out = v; };
    return b;
}

DriftSpec DriftSpec::bump(int m, int d, const Vec& center, double radius,
                          const Vec& heights) {
    if (center.size() != m + d || heights.size() != m)
        throw DimensionMismatch("bump drift: center in R^{m+d}, heights in R^m");
    if (!(radius > 0.0)) throw InvalidParam("bump drift: radius must be positive");
    DriftSpec b;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = center;
    b.support_radius_ = radius;
    b.zero_ = false;
    std::ostringstream id;
    id << "bump[r=" << radius << ",h=" << heights.transpose() << "]";
    b.id_ = id.str();
    Vec c = center, h = heights;
    double r = radius;
    b.fn_ = [c, h, r](double, const Vec& z, Vec& out) {
        double s2 = (z - c).squaredNorm() / (r * r);
        if (s2 >= 1.0) {
            out.setZero();
            return;
        }
        out = h * std::exp(1.0 - 1.0 / (1.0 - s2));
    };
    return b;
}

DriftSpec DriftSpec::radial_singularity(int m, int d, const Vec& center, double radius,
                                        double gamma, const Vec& dir) {
    if (center.size() != m + d || dir.size() != m)
        throw DimensionMismatch("radial_singularity drift: bad dimensions");
    if (!(radius > 0.0) || !(gamma > 0.0))
        throw InvalidParam("radial_singularity drift: radius and gamma must be positive");
    DriftSpec b;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = center;
    b.support_radius_ = radius;
    b.zero_ = false;
    std::ostringstream id;
    id << "radial_singularity[gamma=" << gamma << ",r=" << radius << "]";
    b.id_ = id.str();
    Vec c = center, e = dir;
    double g = gamma;
    b.fn_ = [c, e, g](double, const Vec& z, Vec& out) {
        double r = (z - c).norm();
        out = e * std::pow(r, -g);  // +inf at the center; the EM clamp handles it
    };
    return b;
}

DriftSpec DriftSpec::y_oscillatory(int m, int d, const Vec& k_wave, const Vec& x_center,
                                   double x_radius, const Vec& dir) {
    if (k_wave.size() != d || x_center.size() != m || dir.size() != m)
        throw DimensionMismatch("y_oscillatory drift: bad dimensions");
    DriftSpec b;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = Vec::Zero(m + d);
    b.zero_ = false;
    b.decays_in_y_ = false;
    std::ostringstream id;
    id << "y_oscillatory[k=" << k_wave.transpose() << "]";
    b.id_ = id.str();
    Vec k = k_wave, xc = x_center, e = dir;
    double r = x_radius;
    int mm = m;
    b.fn_ = [k, xc, e, r, mm](double, const Vec& z, Vec& out) {
        double s2 = (z.head(mm) - xc).squaredNorm() / (r * r);
        if (s2 >= 1.0) {
            out.setZero();
            return;
        }
        double envelope = std::exp(1.0 - 1.0 / (1.0 - s2));
        out = e * (std::sin(k.dot(z.tail(k.size()))) * envelope);
    };
    return b;
}

DriftSpec DriftSpec::grid_sampled(int m, int d, LatticeField field, std::string id) {
    if (field.comps != m) throw DimensionMismatch("grid drift: field must have m comps");
    if (field.lat.ndim() != m + d)
        throw DimensionMismatch("grid drift: lattice must live in R^{m+d}");
    DriftSpec b;
    b.form_ = Form::grid_sampled;
    b.m_ = m;
    b.dim_ = m + d;
    b.center_ = 0.5 * (field.lat.lo + field.lat.hi);
    // Everything outside the lattice box interpolates to zero already; the
    // circumscribed radius documents that.
    b.support_radius_ = 0.5 * (field.lat.hi - field.lat.lo).norm();
    b.zero_ = false;
    b.id_ = std::move(id);
    b.field_ = std::make_shared<LatticeField>(std::move(field));
    return b;
}

DriftSpec DriftSpec::with_pq(double p, double q) const {
    DriftSpec b = *this;
    b.p_ = p;
    b.q_ = q;
    return b;
}

DriftSpec DriftSpec::truncated(double k) const {
    DriftSpec b = *this;
    b.truncation_ = k;
    b.id_ = id_ + "|trunc" + std::to_string(k);
    return b;
}

DriftSpec DriftSpec::from_json(const std::string& json_text, int m, int d) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigInvalid(std::string("drift config: ") + e.what());
    }
    if (!j.contains("name")) throw ConfigInvalid("drift config: missing 'name'");
    std::string name = j["name"].get<std::string>();
    auto vec = [&](const char* key, int len) {
        if (!j.contains(key)) throw ConfigInvalid(std::string("drift config: missing ") + key);
        auto v = j[key].get<std::vector<double>>();
        if (static_cast<int>(v.size()) != len)
            throw ConfigInvalid(std::string("drift config: bad length for ") + key);
        Vec out(len);
        for (int i = 0; i < len; ++i) out[i] = v[static_cast<size_t>(i)];
        return out;
    };
    DriftSpec b;
    if (name == "zero") {
        b = zero(m, d);
    } else if (name == "constant") {
        b = constant(m, d, vec("value", m));
    } else if (name == "bump") {
        b = bump(m, d, vec("center", m + d), j.value("radius", 1.0), vec("heights", m));
    } else if (name == "radial_singularity") {
        b = radial_singularity(m, d, vec("center", m + d), j.value("radius", 1.0),
                               j.value("gamma", 0.5), vec("dir", m));
    } else if (name == "y_oscillatory") {
        b = y_oscillatory(m, d, vec("k", d), vec("x_center", m), j.value("x_radius", 1.0),
                          vec("dir", m));
    } else {
        throw ConfigInvalid("drift config: unknown drift '" + name + "'");
    }
    if (j.contains("p") || j.contains("q"))
        b = b.with_pq(j.value("p", 9.0), j.value("q", 9.0));
    return b;
}

}  // namespace heisim
