#include "heisim/experiments.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "heisim/bismut.hpp"
#include "heisim/errors.hpp"
#include "heisim/norms.hpp"
#include "heisim/philox.hpp"
#include "heisim/report.hpp"

namespace heisim {

namespace {

constexpr const char* kVersion = "heisim 0.1.0";

using nlohmann::json;

Vec vec_from_json(const json& j) {
    auto v = j.get<std::vector<double>>();
    Vec out(static_cast<int>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
    return out;
}

GroupStructure group_from_config(const json& raw) {
    if (!raw.contains("group")) throw ConfigInvalid("config: missing 'group'");
    return group_from_json(raw["group"].dump());
}

DriftSpec drift_from_config(const json& raw, const GroupStructure& gs) {
    if (!raw.contains("drift")) throw ConfigInvalid("config: missing 'drift'");
    return DriftSpec::from_json(raw["drift"].dump(), gs.m(), gs.d());
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

struct AssertionLog {
    std::vector<std::string> lines;
    bool passed = true;
    void check(bool ok, const std::string& what) {
        lines.push_back(std::string(ok ? "PASS " : "FAIL ") + what);
        passed = passed && ok;
    }
};

void write_manifest(const ExperimentConfig& cfg, const AssertionLog& log,
                    double wall_seconds, const std::vector<std::string>& files) {
    json m;
    m["schema_version"] = cfg.schema_version;
    m["experiment"] = cfg.experiment;
    m["seed"] = cfg.seed;
    m["version"] = kVersion;
    m["workers"] = worker_count();
    m["wall_time_s"] = wall_seconds;
    m["config"] = cfg.raw;
    m["data_files"] = files;
    m["passed"] = log.passed;
    m["assertions"] = log.lines;
    write_text_file(cfg.output_dir + "/manifest.json", m.dump(2) + "\n");
}

// Endpoints of the reference flow; row-major n_paths x (m+d).
std::vector<double> simulate_endpoints(const GroupStructure& gs, const Vec& start,
                                       double t, long n_paths, uint64_t seed,
                                       int n_steps) {
    std::vector<double> endpoints(static_cast<size_t>(n_paths) * gs.dim());
    parallel_chunks(n_paths, 2048, [&](long, long lo, long hi) {
        Vec end(gs.dim());
        for (long i = lo; i < hi; ++i) {
            BrownianGrid grid = sample_brownian(gs.m(), n_steps, t, seed,
                                                static_cast<uint64_t>(i));
            auto ito = flow_ito_integrals(gs, grid);
            flow_state_at(gs, start, grid, ito, n_steps, end);
            for (int c = 0; c < gs.dim(); ++c)
                endpoints[static_cast<size_t>(i) * gs.dim() + c] = end[c];
        }
    });
    return endpoints;
}

std::vector<double> project_columns(const std::vector<double>& rows, int width,
                                    int take) {
    const size_t n = rows.size() / static_cast<size_t>(width);
    std::vector<double> out(n * static_cast<size_t>(take));
    for (size_t i = 0; i < n; ++i)
        for (int c = 0; c < take; ++c)
            out[i * static_cast<size_t>(take) + static_cast<size_t>(c)] =
                rows[i * static_cast<size_t>(width) + static_cast<size_t>(c)];
    return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
    ExperimentConfig cfg;
    try {
        cfg.raw = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigInvalid(std::string("config parse: ") + e.what());
    }
    cfg.schema_version = cfg.raw.value("schema_version", 0);
    cfg.experiment = cfg.raw.value("experiment", "");
    cfg.seed = cfg.raw.value("seed", 0ull);
    cfg.output_dir = cfg.raw.value("output", "out");
    return cfg;
}

ExperimentConfig experiment_config_from_file(const std::string& path) {
    return experiment_config_from_json(read_text_file(path));
}

void validate_experiment_config(const ExperimentConfig& cfg) {
    static const std::set<std::string> known = {
        "heat_kernel_exponent", "bismut_vs_fd", "gradient_scaling", "zvonkin_sweep",
        "krylov_suite",         "uniqueness",   "weak_strong",      "group_checks"};
    if (cfg.schema_version != 1)
        throw ConfigInvalid("config: schema_version must be 1");
    if (!known.count(cfg.experiment))
        throw ConfigInvalid("config: unknown experiment '" + cfg.experiment + "'");
    if (!cfg.raw.contains("group")) throw ConfigInvalid("config: missing 'group'");
    if (cfg.raw.contains("budget")) {
        const auto& b = cfg.raw["budget"];
        if (b.value("n_paths", 1L) <= 0 || b.value("n_steps", 1) <= 0)
            throw ConfigInvalid("config: budget entries must be positive");
    }
    static const std::set<std::string> needs_drift = {"krylov_suite", "uniqueness",
                                                      "weak_strong", "zvonkin_sweep"};
    if (needs_drift.count(cfg.experiment) && !cfg.raw.contains("drift"))
        throw ConfigInvalid("config: experiment '" + cfg.experiment + "' needs 'drift'");
}

HeatKernelResult heat_kernel_exponent(const GroupStructure& gs, const Vec& start,
                                      const std::vector<double>& t_set, long n_paths,
                                      uint64_t seed, double bandwidth_factor,
                                      int n_steps) {
    if (t_set.size() < 4)
        throw InvalidParam("heat_kernel_exponent: need a geometric t set with >= 4 points");
    HeatKernelResult res;
    res.t_set = t_set;
    const std::array<double, 3> factors = {0.5, 1.0, 2.0};
    std::vector<double> full_v, full_se, horiz_v, horiz_se, lo_v, lo_se, hi_v, hi_se;
    for (size_t it = 0; it < t_set.size(); ++it) {
        auto endpoints = simulate_endpoints(gs, start, t_set[it], n_paths,
                                            derive_seed(seed, it), n_steps);
        auto horiz = project_columns(endpoints, gs.dim(), gs.m());
        std::array<KdePointEstimate, 3> fullr{}, horizr{};
        for (size_t k = 0; k < factors.size(); ++k) {
            Vec bw_full = silverman_bandwidth(endpoints, gs.dim(),
                                              bandwidth_factor * factors[k]);
            Vec bw_h = silverman_bandwidth(horiz, gs.m(), bandwidth_factor * factors[k]);
            fullr[k] = kde_at_point(endpoints, gs.dim(), start, bw_full);
            horizr[k] = kde_at_point(horiz, gs.m(), start.head(gs.m()), bw_h);
        }
        res.full_density.push_back(fullr);
        res.horizontal_density.push_back(horizr);
        full_v.push_back(fullr[1].value);
        full_se.push_back(fullr[1].std_error);
        horiz_v.push_back(horizr[1].value);
        horiz_se.push_back(horizr[1].std_error);
        lo_v.push_back(fullr[0].value);
        lo_se.push_back(fullr[0].std_error);
        hi_v.push_back(fullr[2].value);
        hi_se.push_back(fullr[2].std_error);
    }
    res.full_slope = fit_loglog_slope(t_set, full_v, full_se);
    res.horizontal_slope = fit_loglog_slope(t_set, horiz_v, horiz_se);
    res.full_slope_lo = fit_loglog_slope(t_set, lo_v, lo_se);
    res.full_slope_hi = fit_loglog_slope(t_set, hi_v, hi_se);
    return res;
}

GradientScalingResult gradient_scaling(const GroupStructure& gs, const ScalarField& f,
                                       const std::vector<double>& t_set,
                                       DirectionKind kind, long n_paths, uint64_t seed) {
    GradientScalingResult res;
    res.t_set = t_set;
    Vec w = Vec::Zero(gs.m()), v = Vec::Zero(gs.d());
    if (kind == DirectionKind::sigma_horizontal)
        w[0] = 1.0;
    else
        v[0] = 1.0;
    Vec z = Vec::Zero(gs.dim());
    std::vector<double> mags, ses;
    for (size_t it = 0; it < t_set.size(); ++it) {
        EstimatorResult g = bismut_gradient(gs, f, t_set[it], z, w, v, n_paths,
                                            derive_seed(seed, 100 + it));
        res.gradients.push_back(g);
        mags.push_back(std::abs(g.value));
        ses.push_back(g.std_error);
    }
    res.fit = fit_loglog_slope(t_set, mags, ses);
    return res;
}

std::vector<BismutFdCase> bismut_fd_suite(const GroupStructure& gs) {
    const int m = gs.m();
    const int d = gs.d();
    std::vector<std::pair<std::string, ScalarField>> fns;
    fns.emplace_back("exp_neg_sq", [](const Vec& z) { return std::exp(-z.squaredNorm()); });
    fns.emplace_back("sin_x1", [](const Vec& z) { return std::sin(z[0]); });
    fns.emplace_back("cos_mix", [m](const Vec& z) { return std::cos(z[m - 1] + 2.0 * z[m]); });
    fns.emplace_back("rational", [](const Vec& z) { return 1.0 / (1.0 + z.squaredNorm()); });
    fns.emplace_back("tanh_xy", [m](const Vec& z) { return std::tanh(z[0] * z[m]); });

    std::vector<std::pair<std::string, std::pair<Vec, Vec>>> dirs;
    {
        Vec w = Vec::Zero(m), v = Vec::Zero(d);
        w[0] = 1.0;
        dirs.emplace_back("w_e1", std::make_pair(w, v));
    }
    {
        Vec w = Vec::Zero(m), v = Vec::Zero(d);
        w[m - 1] = 1.0;
        dirs.emplace_back("w_em", std::make_pair(w, v));
    }
    {
        Vec w = Vec::Zero(m), v = Vec::Zero(d);
        v[0] = 1.0;
        dirs.emplace_back("v_e1", std::make_pair(w, v));
    }
    {
        Vec w = Vec::Zero(m), v = Vec::Zero(d);
        w[0] = 1.0;
        w[m - 1] = -1.0;
        v[0] = 0.5;
        dirs.emplace_back("mixed", std::make_pair(w, v));
    }

    std::vector<std::pair<std::string, Vec>> points;
    points.emplace_back("origin", Vec::Zero(m + d));
    {
        Vec z(m + d);
        for (int c = 0; c < m + d; ++c) z[c] = 0.3 * std::pow(-0.7, c);
        points.emplace_back("offset", z);
    }

    std::vector<BismutFdCase> suite;
    for (const auto& fn : fns)
        for (const auto& dir : dirs)
            for (const auto& pt : points) {
                BismutFdCase c;
                c.id = fn.first + "|" + dir.first + "|" + pt.first;
                c.f = fn.second;
                c.w = dir.second.first;
                c.v = dir.second.second;
                c.z = pt.second;
                suite.push_back(std::move(c));
            }
    return suite;
}

namespace {

// ---- individual experiment drivers; each returns its assertion log ----

AssertionLog run_group_checks(const ExperimentConfig& cfg,
                              std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    const long n_triples = cfg.raw.value("n_triples", 10000L);
    const double tol = cfg.raw.value("tolerance", 1e-12);
    uint64_t seed = cfg.seed;

    auto rand_point = [&](long i, uint32_t tag) {
        Vec z(gs.dim());
        for (int c = 0; c < gs.dim(); ++c)
            z[c] = 4.0 * philox_uniform(seed, RngStream::generic, static_cast<uint64_t>(i),
                                        tag, static_cast<uint32_t>(c)) - 2.0;
        return z;
    };

    double worst_assoc = 0.0, worst_inv = 0.0, worst_id = 0.0;
    for (long i = 0; i < n_triples; ++i) {
        Vec p1 = rand_point(i, 0), p2 = rand_point(i, 1), p3 = rand_point(i, 2);
        Vec lhs = gs.mul(gs.mul(p1, p2), p3);
        Vec rhs = gs.mul(p1, gs.mul(p2, p3));
        double scale = 1.0 + lhs.norm() + rhs.norm();
        worst_assoc = std::max(worst_assoc, (lhs - rhs).norm() / scale);
        worst_inv = std::max(worst_inv, gs.mul(p1, gs.inverse(p1)).norm() / (1.0 + p1.norm()));
        worst_id = std::max(worst_id,
                            (gs.mul(p1, Vec::Zero(gs.dim())) - p1).norm() / (1.0 + p1.norm()));
    }
    log.check(worst_assoc <= tol, "associativity relative error " + fmt(worst_assoc) +
                                      " <= " + fmt(tol));
    log.check(worst_inv <= tol, "inverse |p*p^{-1}| " + fmt(worst_inv) + " <= " + fmt(tol));
    log.check(worst_id <= tol, "right identity error " + fmt(worst_id) + " <= " + fmt(tol));

    const HReport& h = gs.h_report();
    log.check(h.passed, "(H) passed with eps " + fmt(h.eps_estimate));
    if (cfg.raw.value("expect_exact_orthogonal", false))
        log.check(h.exact_orthogonal && h.eps_estimate == 0.0,
                  "fast path: exact orthogonality with eps = 0");

    // Lower bound of the commutator combination, sampled over unit a.
    double worst_margin = INFINITY;
    const long n_dirs = 2000;
    for (long i = 0; i < n_dirs; ++i) {
        Vec a(gs.d());
        for (int l = 0; l < gs.d(); ++l)
            a[l] = philox_normal(seed, RngStream::generic, static_cast<uint64_t>(i), 7,
                                 static_cast<uint32_t>(l));
        if (a.norm() == 0.0) continue;
        a /= a.norm();
        Mat sum = Mat::Zero(gs.m(), gs.m());
        for (int l = 0; l < gs.d(); ++l) sum += a[l] * gs.g_mat(l);
        worst_margin = std::min(worst_margin, sum.squaredNorm() - h.lower_bound_32);
    }
    log.check(worst_margin >= -1e-9,
              "commutator lower bound margin " + fmt(worst_margin) + " >= 0");

    // check_Hstar arithmetic table against hand computation.
    struct Row { double p, q; bool expect; };
    const std::vector<Row> table = {{9, 9, true}, {4, 4, false}, {8, 4, false},
                                    {16, 6, true}, {1e9, 2.0000001, true}, {1e9, 2, false}};
    std::vector<std::string> rows;
    bool table_ok = true;
    for (const auto& r : table) {
        bool got = check_Hstar(r.p, r.q, gs.m(), gs.d());
        table_ok = table_ok && (got == r.expect);
        rows.push_back(fmt(r.p) + "," + fmt(r.q) + "," + (got ? "1" : "0") + "," +
                       (r.expect ? "1" : "0"));
    }
    log.check(table_ok, "check_Hstar table matches hand computation");

    std::vector<std::string> checks;
    checks.push_back("associativity," + fmt(worst_assoc) + "," + fmt(tol));
    checks.push_back("inverse," + fmt(worst_inv) + "," + fmt(tol));
    checks.push_back("identity," + fmt(worst_id) + "," + fmt(tol));
    checks.push_back("eps_estimate," + fmt(h.eps_estimate) + ",1");
    checks.push_back("lower_bound_32," + fmt(h.lower_bound_32) + ",0");
    checks.push_back("bound_margin," + fmt(worst_margin) + ",0");
    write_text_file(cfg.output_dir + "/group_checks.csv",
                    csv_with_checksum("check,value,threshold", checks));
    write_text_file(cfg.output_dir + "/hstar_table.csv",
                    csv_with_checksum("p,q,got,expected", rows));
    files.push_back("group_checks.csv");
    files.push_back("hstar_table.csv");
    return log;
}

AssertionLog run_heat_kernel(const ExperimentConfig& cfg, std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    std::vector<double> t_set =
        cfg.raw.value("t_set", std::vector<double>{0.125, 0.25, 0.5, 1.0});
    long n_paths = cfg.raw.contains("budget")
                       ? cfg.raw["budget"].value("n_paths", 100000L)
                       : 100000L;
    int n_steps = cfg.raw.contains("budget") ? cfg.raw["budget"].value("n_steps", 64) : 64;
    Vec start = cfg.raw.contains("start") ? vec_from_json(cfg.raw["start"])
                                          : Vec(Vec::Zero(gs.dim()));
    double bw = cfg.raw.value("bandwidth_factor", 1.0);

    HeatKernelResult res =
        heat_kernel_exponent(gs, start, t_set, n_paths, cfg.seed, bw, n_steps);

    std::vector<std::string> rows;
    const std::array<double, 3> factors = {0.5, 1.0, 2.0};
    for (size_t i = 0; i < t_set.size(); ++i)
        for (size_t k = 0; k < 3; ++k)
            rows.push_back(fmt(t_set[i]) + "," + fmt(factors[k]) + "," +
                           fmt(res.full_density[i][k].value) + "," +
                           fmt(res.full_density[i][k].std_error) + "," +
                           fmt(res.horizontal_density[i][k].value) + "," +
                           fmt(res.horizontal_density[i][k].std_error));
    write_text_file(cfg.output_dir + "/heat_kernel.csv",
                    csv_with_checksum(
                        "t,bandwidth_factor,density,density_stderr,horizontal_density,"
                        "horizontal_stderr",
                        rows));
    files.push_back("heat_kernel.csv");

    double target_full = cfg.raw.value("target_full_slope",
                                       -0.5 * static_cast<double>(gs.m() + 2 * gs.d()));
    double tol_full = cfg.raw.value("tolerance_full", 0.25);
    double target_h = cfg.raw.value("target_horizontal_slope", -0.5 * gs.m());
    double tol_h = cfg.raw.value("tolerance_horizontal", 0.15);
    log.check(std::abs(res.full_slope.slope - target_full) <= tol_full,
              "full density log-log slope " + fmt(res.full_slope.slope) + " within " +
                  fmt(tol_full) + " of " + fmt(target_full));
    log.check(std::abs(res.horizontal_slope.slope - target_h) <= tol_h,
              "horizontal control slope " + fmt(res.horizontal_slope.slope) + " within " +
                  fmt(tol_h) + " of " + fmt(target_h));
    return log;
}

AssertionLog run_bismut_vs_fd(const ExperimentConfig& cfg,
                              std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    double t = cfg.raw.value("t", 0.5);
    long n_paths = cfg.raw.contains("budget")
                       ? cfg.raw["budget"].value("n_paths", 100000L)
                       : 100000L;
    double eps = cfg.raw.value("fd_eps", 1e-3);
    long min_agree = cfg.raw.value("min_agree", 38L);
    double z_tol = cfg.raw.value("z_tolerance", 3.0);

    auto suite = bismut_fd_suite(gs);
    std::vector<std::string> rows;
    long agree = 0;
    double worst_flagged = 0.0;
    for (size_t i = 0; i < suite.size(); ++i) {
        const auto& c = suite[i];
        uint64_t s = derive_seed(cfg.seed, i);
        EstimatorResult bis = bismut_gradient(gs, c.f, t, c.z, c.w, c.v, n_paths, s);
        EstimatorResult fd = gradient_fd_oracle(gs, c.f, t, c.z, c.w, c.v, eps, n_paths, s);
        double z = z_score(bis, fd);
        if (std::abs(z) <= z_tol) ++agree;
        worst_flagged = std::max(worst_flagged, bis.flagged_fraction);
        rows.push_back(fmt(t) + "," + c.id + "," + fmt(bis.value) + "," +
                       fmt(bis.std_error) + "," + fmt(fd.value) + "," +
                       fmt(fd.std_error) + "," + std::to_string(n_paths) + "," +
                       fmt(bis.flagged_fraction));
    }
    write_text_file(
        cfg.output_dir + "/bismut_vs_fd.csv",
        csv_with_checksum(
            "t,direction_id,bismut_mean,bismut_stderr,fd_mean,fd_stderr,n_paths,"
            "flagged_fraction",
            rows));
    files.push_back("bismut_vs_fd.csv");
    log.check(agree >= min_agree, "agreement within " + fmt(z_tol) +
                                      " combined stderr in " + std::to_string(agree) + "/" +
                                      std::to_string(suite.size()) + " cases (need " +
                                      std::to_string(min_agree) + ")");
    log.check(worst_flagged <= 0.001,
              "flagged fraction " + fmt(worst_flagged) + " <= 0.001");
    return log;
}

AssertionLog run_gradient_scaling(const ExperimentConfig& cfg,
                                  std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    long n_paths = cfg.raw.contains("budget")
                       ? cfg.raw["budget"].value("n_paths", 100000L)
                       : 100000L;
    std::vector<double> t_set = cfg.raw.value(
        "t_set", std::vector<double>{0.0625, 0.125, 0.25, 0.5, 1.0});

    struct Case {
        const char* name;
        DirectionKind kind;
        double target, tol;
        ScalarField f;
    };
    const int m = gs.m();
    std::vector<Case> cases = {
        {"sigma_sign_x1", DirectionKind::sigma_horizontal,
         cfg.raw.value("target_sigma", -0.5), cfg.raw.value("tolerance_sigma", 0.15),
         [](const Vec& z) { return z[0] >= 0.0 ? 1.0 : -1.0; }},
        {"vertical_sign_y1", DirectionKind::vertical, cfg.raw.value("target_vertical", -1.0),
         cfg.raw.value("tolerance_vertical", 0.2),
         [m](const Vec& z) { return z[m] >= 0.0 ? 1.0 : -1.0; }},
    };
    std::vector<std::string> rows;
    for (size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& c = cases[ci];
        GradientScalingResult res =
            gradient_scaling(gs, c.f, t_set, c.kind, n_paths, derive_seed(cfg.seed, ci));
        for (size_t i = 0; i < t_set.size(); ++i)
            rows.push_back(std::string(c.name) + "," + fmt(t_set[i]) + "," +
                           fmt(res.gradients[i].value) + "," +
                           fmt(res.gradients[i].std_error));
        log.check(std::abs(res.fit.slope - c.target) <= c.tol,
                  std::string(c.name) + " slope " + fmt(res.fit.slope) + " within " +
                      fmt(c.tol) + " of " + fmt(c.target));
    }
    write_text_file(cfg.output_dir + "/gradient_scaling.csv",
                    csv_with_checksum("case,t,gradient,stderr", rows));
    files.push_back("gradient_scaling.csv");
    return log;
}

AssertionLog run_zvonkin_sweep(const ExperimentConfig& cfg,
                               std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    DriftSpec drift = drift_from_config(cfg.raw, gs);
    std::vector<double> lambdas =
        cfg.raw.value("lambda_set", std::vector<double>{4.0, 16.0, 64.0, 256.0});
    double lambda_star = cfg.raw.value("lambda_star", 16.0);
    double max_ratio = cfg.raw.value("max_ratio", 0.5);
    double hw = cfg.raw.value("box_halfwidth", 2.0);
    int nodes_per_dim = cfg.raw.value("nodes_per_dim", 13);
    int n_times = cfg.raw.value("n_times", 7);
    double t_final = cfg.raw.value("t_final", 1.0);

    Vec lo = Vec::Constant(gs.dim(), -hw), hi = Vec::Constant(gs.dim(), hw);
    BoxLattice lat = make_box_lattice(lo, hi, std::vector<int>(static_cast<size_t>(gs.dim()),
                                                               nodes_per_dim));
    std::vector<double> times(static_cast<size_t>(n_times));
    for (int i = 0; i < n_times; ++i) times[static_cast<size_t>(i)] = t_final * i / (n_times - 1);

    PicardOpts popts;
    popts.tol = cfg.raw.value("picard_tol", 1e-5);
    popts.max_iter = cfg.raw.value("picard_max_iter", 8);
    popts.mc.path_steps = cfg.raw.value("path_steps", 128);
    popts.mc.n_paths = cfg.raw.value("mc_paths", 96L);
    popts.mc.seed = cfg.seed;

    std::vector<std::string> rows;
    std::vector<double> sup_us, grad_bounds;
    bool ratios_ok = true, qn3_ok = true;
    MildSolutionGrid residual_sol;
    double residual_lambda = cfg.raw.value("residual_lambda", 64.0);
    bool have_residual_sol = false;
    for (double lambda : lambdas) {
        MildSolutionGrid sol = picard_solve_xi(gs, drift, lambda, lat, times, popts);
        ZvonkinMap map = build_zvonkin_map(sol, cfg.raw.value("qn3_pairs", 1000L),
                                           derive_seed(cfg.seed, 0x9));
        double worst_ratio = 0.0;
        for (double r : sol.ratio_history) worst_ratio = std::max(worst_ratio, r);
        if (lambda >= lambda_star && !sol.ratio_history.empty())
            ratios_ok = ratios_ok && worst_ratio <= max_ratio;
        if (map.qn3.checked) qn3_ok = qn3_ok && map.qn3.failures == 0;
        sup_us.push_back(sol.sup_u());
        grad_bounds.push_back(map.grad_bound);
        rows.push_back(fmt(lambda) + "," + fmt(sol.sup_u()) + "," + fmt(sol.b_norm()) +
                       "," + fmt(worst_ratio) + "," + fmt(map.grad_bound) + "," +
                       std::to_string(map.qn3.checked ? map.qn3.failures : -1) + "," +
                       std::to_string(sol.increment_history.size()));
        if (lambda == residual_lambda) {
            residual_sol = std::move(sol);
            have_residual_sol = true;
        }
    }
    write_text_file(
        cfg.output_dir + "/zvonkin_lambda.csv",
        csv_with_checksum("lambda,sup_u,b_norm,max_increment_ratio,grad_bound,"
                          "qn3_failures,iterations",
                          rows));
    files.push_back("zvonkin_lambda.csv");

    log.check(ratios_ok, "Picard increment ratios <= " + fmt(max_ratio) +
                             " for lambda >= " + fmt(lambda_star));
    bool decreasing = true;
    for (size_t i = 0; i + 1 < sup_us.size(); ++i)
        decreasing = decreasing && sup_us[i + 1] < sup_us[i];
    log.check(decreasing, "sup |Xi_lambda b| strictly decreasing along the lambda sweep");
    log.check(qn3_ok, "bi-Lipschitz check clean whenever grad bound <= 1/2");

    // Transformed-equation residual under mesh refinement.
    if (!have_residual_sol)
        residual_sol = picard_solve_xi(gs, drift, residual_lambda, lat, times, popts);
    int base_steps = cfg.raw.value("residual_base_steps", 64);
    int n_levels = cfg.raw.value("residual_levels", 3);
    long rn_paths = cfg.raw.value("residual_paths", 32L);
    double cutoff = cfg.raw.value("residual_cutoff", hw);
    std::vector<std::vector<double>> sups(static_cast<size_t>(n_levels + 1));
    for (long p = 0; p < rn_paths; ++p) {
        BrownianGrid grid = sample_brownian(gs.m(), base_steps, t_final,
                                            derive_seed(cfg.seed, 0xEE), static_cast<uint64_t>(p));
        for (int lev = 0; lev <= n_levels; ++lev) {
            SdePath path = euler_maruyama_singular(gs, drift, Vec::Zero(gs.dim()), grid,
                                                   cutoff);
            ResidualReport rep = transformed_residual(gs, residual_lambda, residual_sol,
                                                      path.states, path.last_index, grid,
                                                      cutoff);
            if (!rep.escaped) sups[static_cast<size_t>(lev)].push_back(rep.sup_residual);
            if (lev < n_levels) grid = refine_brownian(grid);
        }
    }
    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
        return v[mid];
    };
    std::vector<std::string> rrows;
    std::vector<double> medians;
    for (int lev = 0; lev <= n_levels; ++lev) {
        double md = median(sups[static_cast<size_t>(lev)]);
        medians.push_back(md);
        rrows.push_back(std::to_string(lev) + "," +
                        fmt(t_final / (base_steps * std::pow(2.0, lev))) + "," + fmt(md));
    }
    write_text_file(cfg.output_dir + "/zvonkin_residual.csv",
                    csv_with_checksum("level,dt,median_residual", rrows));
    files.push_back("zvonkin_residual.csv");
    double need = cfg.raw.value("residual_factor", 1.3);
    bool res_ok = true;
    for (size_t i = 0; i + 1 < medians.size(); ++i)
        res_ok = res_ok && medians[i] >= need * medians[i + 1];
    log.check(res_ok, "transformed residual decreases by >= " + fmt(need) +
                          " per mesh halving");
    return log;
}

AssertionLog run_krylov_suite(const ExperimentConfig& cfg,
                              std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    DriftSpec drift = drift_from_config(cfg.raw, gs);
    double p_prime = cfg.raw.value("p_prime", 12.0);
    double q_prime = cfg.raw.value("q_prime", 12.0);
    double t_final = cfg.raw.value("t_final", 1.0);
    long n_paths = cfg.raw.contains("budget") ? cfg.raw["budget"].value("n_paths", 20000L)
                                              : 20000L;
    std::vector<double> heights = cfg.raw.value("heights", std::vector<double>{1, 10, 100});
    std::vector<double> widths = cfg.raw.value("widths", std::vector<double>{1.0, 0.5, 0.25});
    double base_radius = cfg.raw.value("f_base_radius", 0.8);
    double hw = cfg.raw.value("norm_box_halfwidth", 2.0);
    int cells = cfg.raw.value("norm_cells", 24);
    int n_times = cfg.raw.value("norm_times", 9);

    Vec fc = cfg.raw.contains("f_center") ? vec_from_json(cfg.raw["f_center"])
                                          : Vec(Vec::Zero(gs.dim()));
    Vec lo = Vec::Constant(gs.dim(), -hw), hi = Vec::Constant(gs.dim(), hw);
    std::vector<double> times(static_cast<size_t>(n_times));
    for (int i = 0; i < n_times; ++i) times[static_cast<size_t>(i)] = t_final * i / (n_times - 1);
    NormLatticeSpec spec = make_norm_lattice(
        lo, hi, std::vector<int>(static_cast<size_t>(gs.dim()), cells), times);

    std::vector<std::string> rows;
    double ratio_min = INFINITY, ratio_max = 0.0;
    size_t case_idx = 0;
    for (double hgt : heights)
        for (double wdt : widths) {
            double r = base_radius * wdt;
            SpaceTimeScalar f = [fc, r, hgt](double, const Vec& z) {
                double s2 = (z - fc).squaredNorm() / (r * r);
                return s2 >= 1.0 ? 0.0 : hgt * std::exp(1.0 - 1.0 / (1.0 - s2));
            };
            EstimatorResult est =
                krylov_estimate(gs, drift, f, p_prime, q_prime, t_final,
                                Vec::Zero(gs.dim()), n_paths,
                                derive_seed(cfg.seed, case_idx), spec);
            ratio_min = std::min(ratio_min, est.value);
            ratio_max = std::max(ratio_max, est.value);
            rows.push_back(fmt(hgt) + "," + fmt(wdt) + "," + fmt(est.value) + "," +
                           fmt(est.std_error));
            ++case_idx;
        }
    write_text_file(cfg.output_dir + "/krylov_suite.csv",
                    csv_with_checksum("height,width,ratio,stderr", rows));
    files.push_back("krylov_suite.csv");
    double max_over_min = cfg.raw.value("max_over_min", 5.0);
    bool ok = ratio_min > 0.0 && ratio_max / ratio_min <= max_over_min;
    log.check(ok, "Krylov ratio spread " + fmt(ratio_max / ratio_min) + " <= " +
                      fmt(max_over_min));
    return log;
}

AssertionLog run_uniqueness(const ExperimentConfig& cfg, std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    DriftSpec drift = drift_from_config(cfg.raw, gs);
    int base_steps = cfg.raw.value("base_steps", 64);
    double t_final = cfg.raw.value("t_final", 1.0);
    int n_levels = cfg.raw.value("n_levels", 3);
    long n_paths = cfg.raw.contains("budget") ? cfg.raw["budget"].value("n_paths", 128L)
                                              : 128L;
    double cutoff = cfg.raw.value("cutoff", 8.0);

    UniquenessReport rep = pathwise_uniqueness_experiment(
        gs, drift, Vec::Zero(gs.dim()), base_steps, t_final, n_levels, n_paths, cfg.seed,
        cutoff);
    std::vector<std::string> rows;
    for (const auto& L : rep.levels)
        rows.push_back(std::to_string(L.level) + "," + fmt(L.dt) + "," +
                       fmt(L.median_sup_diff) + "," + fmt(L.mean_sup_diff) + "," +
                       std::to_string(L.escaped) + "," + fmt(L.clamp_fraction));
    write_text_file(cfg.output_dir + "/uniqueness.csv",
                    csv_with_checksum(
                        "level,dt,median_sup_diff,mean_sup_diff,escaped,clamp_fraction",
                        rows));
    files.push_back("uniqueness.csv");

    bool decreasing = true;
    for (size_t i = 0; i + 1 < rep.levels.size(); ++i)
        decreasing = decreasing &&
                     rep.levels[i + 1].median_sup_diff < rep.levels[i].median_sup_diff;
    log.check(decreasing, "same-noise refinement differences decrease across levels");
    log.check(rep.strong_order >= cfg.raw.value("min_order", 0.4),
              "empirical strong order " + fmt(rep.strong_order) + " >= " +
                  fmt(cfg.raw.value("min_order", 0.4)));

    // Negative control: distinct noise stays O(1).
    BrownianGrid g1 = sample_brownian(gs.m(), base_steps, t_final, cfg.seed + 101, 0);
    BrownianGrid g2 = sample_brownian(gs.m(), base_steps, t_final, cfg.seed + 202, 0);
    SdePath s1 = euler_maruyama_singular(gs, drift, Vec::Zero(gs.dim()), g1, cutoff);
    SdePath s2 = euler_maruyama_singular(gs, drift, Vec::Zero(gs.dim()), g2, cutoff);
    double control = 0.0;
    int nmin = std::min(s1.last_index, s2.last_index);
    for (int j = 0; j <= nmin; ++j)
        control = std::max(control, (s1.state(j, gs.dim()) - s2.state(j, gs.dim())).norm());
    double finest = rep.levels.back().median_sup_diff;
    log.check(control > 5.0 * finest,
              "negative control (distinct noise) " + fmt(control) + " > 5x matched " +
                  fmt(finest));
    double clamp_worst = 0.0;
    for (const auto& L : rep.levels) clamp_worst = std::max(clamp_worst, L.clamp_fraction);
    log.check(clamp_worst <= cfg.raw.value("max_clamp_fraction", 0.005),
              "clamped steps fraction " + fmt(clamp_worst) + " within bound");
    return log;
}

AssertionLog run_weak_strong(const ExperimentConfig& cfg, std::vector<std::string>& files) {
    AssertionLog log;
    GroupStructure gs = group_from_config(cfg.raw);
    DriftSpec drift = drift_from_config(cfg.raw, gs);
    double t_final = cfg.raw.value("t_final", 1.0);
    long n_paths = cfg.raw.contains("budget") ? cfg.raw["budget"].value("n_paths", 50000L)
                                              : 50000L;
    const int m = gs.m();
    std::vector<std::pair<std::string, ScalarField>> obs;
    obs.emplace_back("tanh_x1", [](const Vec& z) { return std::tanh(z[0]); });
    obs.emplace_back("exp_neg_sq", [](const Vec& z) { return std::exp(-z.squaredNorm()); });
    obs.emplace_back("sin_y1", [m](const Vec& z) { return std::sin(z[m]); });
    obs.emplace_back("rational", [](const Vec& z) { return 1.0 / (1.0 + z.squaredNorm()); });
    obs.emplace_back("cos_mix", [m](const Vec& z) { return std::cos(z[0] - z[m]); });

    double z_tol = cfg.raw.value("z_tolerance", 3.0);
    std::vector<std::string> rows;
    json jrep = json::array();
    bool all_ok = true;
    for (size_t i = 0; i < obs.size(); ++i) {
        WeakStrongReport rep = weak_strong_compare(gs, drift, obs[i].second, t_final,
                                                   Vec::Zero(gs.dim()), n_paths,
                                                   derive_seed(cfg.seed, i));
        all_ok = all_ok && std::abs(rep.z_score) <= z_tol;
        rows.push_back(obs[i].first + "," + fmt(rep.weak_route.value) + "," +
                       fmt(rep.weak_route.std_error) + "," + fmt(rep.em_route.value) +
                       "," + fmt(rep.em_route.std_error) + "," + fmt(rep.z_score));
        jrep.push_back({{"observable", obs[i].first},
                        {"weak", rep.weak_route.value},
                        {"weak_stderr", rep.weak_route.std_error},
                        {"em", rep.em_route.value},
                        {"em_stderr", rep.em_route.std_error},
                        {"z_score", rep.z_score}});
    }
    write_text_file(cfg.output_dir + "/weak_strong.csv",
                    csv_with_checksum(
                        "observable,weak,weak_stderr,em,em_stderr,z_score", rows));
    write_text_file(cfg.output_dir + "/weak_strong.json", jrep.dump(2) + "\n");
    files.push_back("weak_strong.csv");
    files.push_back("weak_strong.json");
    log.check(all_ok, "all observables agree with |z| <= " + fmt(z_tol));
    return log;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    ensure_dir(cfg.output_dir);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> files;
    AssertionLog log;
    if (cfg.experiment == "group_checks")
        log = run_group_checks(cfg, files);
    else if (cfg.experiment == "heat_kernel_exponent")
        log = run_heat_kernel(cfg, files);
    else if (cfg.experiment == "bismut_vs_fd")
        log = run_bismut_vs_fd(cfg, files);
    else if (cfg.experiment == "gradient_scaling")
        log = run_gradient_scaling(cfg, files);
    else if (cfg.experiment == "zvonkin_sweep")
        log = run_zvonkin_sweep(cfg, files);
    else if (cfg.experiment == "krylov_suite")
        log = run_krylov_suite(cfg, files);
    else if (cfg.experiment == "uniqueness")
        log = run_uniqueness(cfg, files);
    else if (cfg.experiment == "weak_strong")
        log = run_weak_strong(cfg, files);
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(cfg, log, wall, files);
    ExperimentOutcome out;
    out.passed = log.passed;
    out.assertion_lines = log.lines;
    return out;
}

}  // namespace heisim
