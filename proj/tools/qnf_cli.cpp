#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnf/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"quantum normal forms for perturbed diophantine torus flows"};

    std::string config_path;
    std::string out_dir;
    int order = -1;
    std::string mode;
    std::string checks;
    int jobs = -1;
    bool validate_only = false;

    app.add_option("--config", config_path, "run configuration (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--order", order, "normal-form order K (overrides config)");
    app.add_option("--mode", mode, "quantum|classical|both (overrides config)");
    app.add_option("--checks", checks, "all|none|comma-separated check names");
    app.add_option("--jobs", jobs, "parallel spectra jobs (overrides config)");
    app.add_flag("--validate-only", validate_only, "parse and validate the config, then exit");

    CLI11_PARSE(app, argc, argv);

    nlohmann::json j;
    {
        std::ifstream is(config_path);
        if (!is) {
            std::cerr << "error: cannot open config " << config_path << "\n";
            return 2;
        }
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
            return 2;
        }
    }

    std::vector<std::string> parse_errors;
    qnf::RunConfig cfg = qnf::parse_config(j, parse_errors);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (order > 0) cfg.orders = order;
    if (!mode.empty()) cfg.mode = mode;
    if (jobs > 0) cfg.jobs = jobs;
    if (!checks.empty()) {
        cfg.checks_all = checks == "all";
        cfg.checks_none = checks == "none";
        cfg.checks.clear();
        if (!cfg.checks_all && !cfg.checks_none) {
            std::stringstream ss(checks);
            std::string name;
            while (std::getline(ss, name, ','))
                if (!name.empty()) cfg.checks.push_back(name);
        }
    }

    for (const auto& e : parse_errors) std::cerr << "config error: " << e << "\n";
    if (!parse_errors.empty()) return 2;

    qnf::ValidationReport vr = qnf::validate_config(cfg);
    for (const auto& e : vr.errors) std::cerr << "config error: " << e << "\n";
    if (!vr.valid) return 2;
    if (vr.dio) {
        std::printf("diophantine scan |q| <= %d: min |<omega,q>| |q|^tau = %.6g at q=%s"
                    " (implied gamma %.6g, declared %.6g %s)\n",
                    vr.dio->qmax, vr.dio->min_product, qnf::ivec_str(vr.dio->worst_q).c_str(),
                    vr.dio->implied_gamma, cfg.frequency.gamma,
                    vr.dio->declared_gamma_ok ? "ok" : "TOO SMALL");
        std::printf("smallness constant gamma tau^tau (tau+2)^{4(tau+2)} = %.6g (%s; advisory"
                    " only, never enforced)\n",
                    vr.dio->smallness_value, vr.dio->smallness_ok ? "< 1/2" : ">= 1/2");
        if (vr.dio->resonance_found) {
            std::fprintf(stderr, "error: resonance found at q=%s\n",
                         qnf::ivec_str(vr.dio->worst_q).c_str());
            return 2;
        }
    }
    if (validate_only) {
        std::printf("config ok\n");
        return 0;
    }

    try {
        qnf::RunReport rep;
        int failed = qnf::run(cfg, rep);
        for (const auto& c : rep.checks)
            std::printf("%-32s %s  value=%.6g tol=%.6g%s%s\n", c.name.c_str(),
                        c.pass ? "pass" : "FAIL", c.value, c.tol, c.note.empty() ? "" : "  ",
                        c.note.c_str());
        std::printf("%zu checks, %d failed; report written to %s/report.json\n",
                    rep.checks.size(), failed, cfg.out_dir.c_str());
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
