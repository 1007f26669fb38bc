#pragma once

#include <array>
#include <nlohmann/json.hpp>
#include <string>

#include "heisim/kde.hpp"
#include "heisim/sde.hpp"

namespace heisim {

// Config-driven experiment runner.  Configs are flat JSON with typed keys and
// an explicit schema version; acceptance thresholds live in the config so CI
// can tighten or loosen them without rebuilds.
struct ExperimentConfig {
    int schema_version = 1;
    std::string experiment;
    uint64_t seed = 0;
    std::string output_dir = "out";
    nlohmann::json raw;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig experiment_config_from_file(const std::string& path);

// Schema validation; throws ConfigInvalid with the offending key named.
void validate_experiment_config(const ExperimentConfig& cfg);

struct ExperimentOutcome {
    bool passed = true;
    std::vector<std::string> assertion_lines;  // "PASS name: detail" / "FAIL ..."
};

// Dispatches to the owning module, writes data CSVs (checksummed) plus a run
// manifest, and reports the in-experiment assertions.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

// ---- standalone experiment operations ----

struct HeatKernelResult {
    std::vector<double> t_set;
    // per t, per bandwidth factor {0.5, 1, 2}: density at the start point
    std::vector<std::array<KdePointEstimate, 3>> full_density;
    std::vector<std::array<KdePointEstimate, 3>> horizontal_density;
    SlopeFit full_slope, horizontal_slope;      // at the base bandwidth
    SlopeFit full_slope_lo, full_slope_hi;      // bandwidth sensitivity
};

// Kernel-density estimate of the transition density at the start point for
// each t, with the log-log slope against t.  The horizontal marginal is the
// exactly-Gaussian control.
HeatKernelResult heat_kernel_exponent(const GroupStructure& gs, const Vec& start,
                                      const std::vector<double>& t_set, long n_paths,
                                      uint64_t seed, double bandwidth_factor = 1.0,
                                      int n_steps = 64);

enum class DirectionKind { sigma_horizontal, vertical };

struct GradientScalingResult {
    std::vector<double> t_set;
    std::vector<EstimatorResult> gradients;
    SlopeFit fit;  // log |gradient| vs log t
};

GradientScalingResult gradient_scaling(const GroupStructure& gs, const ScalarField& f,
                                       const std::vector<double>& t_set,
                                       DirectionKind kind, long n_paths, uint64_t seed);

// Fixed comparison suite for the Bismut-vs-finite-difference study:
// 5 bounded smooth test functions x 4 directions x 2 base points.
struct BismutFdCase {
    std::string id;
    ScalarField f;
    Vec w, v, z;
};

std::vector<BismutFdCase> bismut_fd_suite(const GroupStructure& gs);

}  // namespace heisim
