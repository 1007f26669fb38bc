// Command-line front end: run / validate / report over experiment configs.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "heisim/experiments.hpp"
#include "heisim/report.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"Simulation and verification toolkit for hypoelliptic diffusions on "
                 "generalized Heisenberg groups"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_override;
    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "JSON experiment config")->required();
    run->add_option("--output", output_override, "override the output directory");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "schema-check a config");
    validate->add_option("config", validate_path, "JSON experiment config")->required();

    std::string report_dir;
    auto* report = app.add_subcommand("report", "pretty-print reports in a directory");
    report->add_option("dir", report_dir, "output directory of a previous run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = heisim::experiment_config_from_file(config_path);
            if (!output_override.empty()) cfg.output_dir = output_override;
            auto outcome = heisim::run_experiment(cfg);
            for (const auto& line : outcome.assertion_lines) std::cout << line << "\n";
            std::cout << (outcome.passed ? "RESULT pass" : "RESULT fail") << "\n";
            return outcome.passed ? 0 : 1;
        }
        if (*validate) {
            auto cfg = heisim::experiment_config_from_file(validate_path);
            heisim::validate_experiment_config(cfg);
            std::cout << "config ok: " << cfg.experiment << "\n";
            return 0;
        }
        if (*report) {
            for (const auto& entry : fs::directory_iterator(report_dir)) {
                const auto path = entry.path();
                if (path.extension() == ".json") {
                    auto j = nlohmann::json::parse(heisim::read_text_file(path.string()));
                    std::cout << "== " << path.filename().string() << "\n"
                              << j.dump(2) << "\n";
                } else if (path.extension() == ".csv") {
                    std::string body = heisim::read_text_file(path.string());
                    bool ok = heisim::verify_csv_checksum(body);
                    std::cout << "== " << path.filename().string()
                              << (ok ? " [checksum ok]" : " [checksum BAD]") << "\n"
                              << body;
                }
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
