#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "heisim/lattice.hpp"

namespace heisim {

// Time-dependent drift b: [0,T] x R^{m+d} -> R^m with integrability metadata.
// Closed-form drifts come from the named library below; grid-sampled drifts
// interpolate a lattice field.  Evaluations outside `support_radius` (around
// `center`) are exactly zero.
class DriftSpec {
  public:
    enum class Form { closed_form, grid_sampled };

    DriftSpec() = default;

    Form form() const { return form_; }
    const std::string& id() const { return id_; }
    int m() const { return m_; }
    int dim() const { return dim_; }
    double p() const { return p_; }
    double q() const { return q_; }
    double support_radius() const { return support_radius_; }
    const Vec& center() const { return center_; }
    bool decays_in_y() const { return decays_in_y_; }
    bool is_zero() const { return zero_; }

    std::optional<double> lqp_norm_cache;
    std::optional<double> hy_half_norm_cache;

    Vec eval(double t, const Vec& z) const;
    void eval(double t, const Vec& z, Vec& out) const;

    // ---- named closed-form library ----
    static DriftSpec zero(int m, int d);
    static DriftSpec constant(int m, int d, const Vec& value);
    // Smooth compactly supported bump: b(z) = heights * exp(1 - 1/(1-s^2)),
    // s = |z - center|/radius (value `heights` at the center, 0 outside).
    static DriftSpec bump(int m, int d, const Vec& center, double radius,
                          const Vec& heights);
    // Truncated radial singularity dir * |z-center|^{-gamma} on 0 < |z-c| <= radius.
    static DriftSpec radial_singularity(int m, int d, const Vec& center, double radius,
                                        double gamma, const Vec& dir);
    // sin(k . y) * bump_x(x) * dir; oscillatory and non-decaying in y.
    static DriftSpec y_oscillatory(int m, int d, const Vec& k_wave, const Vec& x_center,
                                   double x_radius, const Vec& dir);
    static DriftSpec grid_sampled(int m, int d, LatticeField field, std::string id);

    // name + parameters from JSON: {"name": "bump", "center": [...], ...}
    static DriftSpec from_json(const std::string& json_text, int m, int d);

    DriftSpec with_pq(double p, double q) const;
    // Multiplies by the indicator of B(0, k): the h_k truncation used by the
    // Zvonkin localization argument.
    DriftSpec truncated(double k) const;

  private:
    Form form_ = Form::closed_form;
    std::string id_ = "zero";
    int m_ = 0, dim_ = 0;
    double p_ = 9.0, q_ = 9.0;
    double support_radius_ = std::numeric_limits<double>::infinity();
    Vec center_;
    bool decays_in_y_ = true;
    bool zero_ = true;
    double truncation_ = std::numeric_limits<double>::infinity();
    std::function<void(double, const Vec&, Vec&)> fn_;
    std::shared_ptr<LatticeField> field_;
};

}  // namespace heisim
