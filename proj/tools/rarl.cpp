#include "rarl/harness/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rarl;
using namespace rarl::harness;

namespace {

enum Exit { ok = 0, bad_config = 1, run_failed = 2, check_failed = 3 };

int run(const std::string& command, ExperimentConfig& cfg, std::size_t jobs) {
    if (command == "eval") {
        const auto s = run_eval_experiment(cfg, jobs);
        std::cout << "final mean f(V_n) = " << num(s.final_mean) << ", planner gain = " << num(s.baseline) << "\n";
    } else if (command == "control") {
        const auto s = run_control_experiment(cfg, jobs);
        std::cout << "final mean f(Q_n) = " << num(s.final_mean) << ", planner optimal gain = " << num(s.baseline)
                  << "\n";
    } else if (command == "plan") {
        const auto j = run_plan(cfg);
        std::cout << "robust gain = " << num(j["evaluation"]["gain"].get<prec_t>())
                  << ", optimal robust gain = " << num(j["control"]["gain"].get<prec_t>()) << "\n";
    } else if (command == "sweep") {
        const auto s = run_robustness_sweep(cfg, jobs);
        std::cout << SWEEP_HEADER << "\n";
        for (std::size_t i = 0; i < s.grid.size(); ++i)
            std::cout << num(s.grid[i]) << "," << num(s.robust_gain[i]) << "," << num(s.nonrobust_gain[i]) << "\n";
    } else if (command == "support-check") {
        const auto rows = run_support_check(cfg);
        bool all = true;
        for (const auto& r : rows) {
            std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " " << r.kind << " measured=" << num(r.measured)
                      << " tolerance=" << num(r.tolerance) << "\n";
            all = all && r.pass;
        }
        return all ? ok : check_failed;
    }
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust average-reward RL experiments"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    for (const char* name : {"eval", "control", "plan", "sweep", "support-check"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment JSON")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "base seed (overrides the config)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_config;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed) cfg.base_seed = *seed;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return bad_config;
    }
    try {
        return run(command, cfg, jobs);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return bad_config;
    } catch (const std::exception& e) {
        std::cerr << "run failure: " << e.what() << "\n";
        return run_failed;
    }
}
