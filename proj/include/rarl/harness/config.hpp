#pragma once

#include "rarl/environments.hpp"
#include "rarl/estimators.hpp"
#include "rarl/learners.hpp"
#include "rarl/uncertainty.hpp"

#include <json.hpp>

#include <fstream>

namespace rarl::harness {

using nlohmann::json;

/// Raised for malformed or inconsistent experiment configurations (exit code 1)
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Algorithm { td, q, planner, support_check, robustness_sweep };

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "td" || s == "eval") return Algorithm::td;
    if (s == "q" || s == "control") return Algorithm::q;
    if (s == "planner" || s == "plan") return Algorithm::planner;
    if (s == "support-check") return Algorithm::support_check;
    if (s == "robustness-sweep" || s == "sweep") return Algorithm::robustness_sweep;
    throw config_error("unknown algorithm '" + s + "'");
}

/**
 * Everything one experiment needs. Parsed from JSON of the form
 *
 *   {
 *     "environment": {"id": "garnet", "params": {"n_states": 5, "n_actions": 3, "seed": 7}},
 *     "uncertainty": {"kind": "contamination", "delta": 0.4},
 *     "algorithm": "td",
 *     "offset": {"kind": "mean"},                    // or {"kind": "reference", "state": 0}
 *     "schedule": {"kind": "constant", "alpha": 0.01}, // or {"kind": "robbins_monro", "c": 1, "offset": 10}
 *     "n_iters": 50000, "n_seeds": 30, "base_seed": 1,
 *     "estimator": {"psi": 0.25, "max_level": 20},
 *     "policy": "uniform",                           // or a states x actions matrix
 *     "record_every": 1,
 *     "write_traces": false,                         // per-seed runs/seed_<i>.csv
 *     "output_dir": "out"
 *   }
 */
struct ExperimentConfig {
    std::string environment = "garnet";
    json environment_params = json::object();
    UncertaintySetSpec spec;
    Algorithm algorithm = Algorithm::td;
    OffsetFn offset;
    StepSchedule schedule = StepSchedule::constant(0.01);
    std::size_t n_iters = 10'000;
    std::size_t n_seeds = 30;
    std::uint64_t base_seed = 0;
    MlmcConfig estimator;
    json policy = "uniform";
    std::size_t record_every = 1;
    bool write_traces = false;
    prec_t planner_tol = 1e-9;
    json sweep = json::object();
    json support_check = json::object();
    std::string output_dir = "out";
};

inline OffsetFn offset_from_json(const json& j) {
    const auto kind = j.value("kind", std::string("mean"));
    if (kind == "mean") return OffsetFn::mean();
    if (kind == "reference") return OffsetFn::reference(j.value("state", std::size_t(0)));
    throw config_error("unknown offset kind '" + kind + "'");
}

inline StepSchedule schedule_from_json(const json& j) {
    const auto kind = j.value("kind", std::string("constant"));
    if (kind == "constant") return StepSchedule::constant(j.value("alpha", 0.01));
    if (kind == "robbins_monro") return StepSchedule::robbins_monro(j.value("c", 1.0), j.value("offset", 1.0));
    throw config_error("unknown schedule kind '" + kind + "'");
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("environment")) {
            const auto& e = j.at("environment");
            c.environment = e.at("id").get<std::string>();
            c.environment_params = e.value("params", json::object());
        }
        if (j.contains("uncertainty")) c.spec = spec_from_json(j.at("uncertainty"));
        if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
        if (j.contains("offset")) c.offset = offset_from_json(j.at("offset"));
        if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
        c.n_iters = j.value("n_iters", c.n_iters);
        c.n_seeds = j.value("n_seeds", c.n_seeds);
        c.base_seed = j.value("base_seed", c.base_seed);
        if (j.contains("estimator")) {
            const auto& e = j.at("estimator");
            if (e.contains("psi")) c.estimator.psi = e.at("psi").get<prec_t>();
            c.estimator.max_level = e.value("max_level", c.estimator.max_level);
        }
        if (j.contains("policy")) c.policy = j.at("policy");
        c.record_every = j.value("record_every", c.record_every);
        c.write_traces = j.value("write_traces", c.write_traces);
        c.planner_tol = j.value("planner_tol", c.planner_tol);
        if (j.contains("sweep")) c.sweep = j.at("sweep");
        if (j.contains("support_check")) c.support_check = j.at("support_check");
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const config_error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error(e.what());
    }
    if (c.n_seeds < 1) throw config_error("n_seeds must be >= 1");
    if (c.n_iters < 1) throw config_error("n_iters must be >= 1");
    if (c.record_every < 1) throw config_error("record_every must be >= 1");
    if (!c.spec.is_linear()) {
        try {
            (void)c.estimator.psi_for(c.spec.kind());
        } catch (const std::exception& e) {
            throw config_error(e.what());
        }
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw config_error(std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

/// Builds an environment by string id; unknown ids are config errors
inline TabularMDP make_environment(const std::string& id, const json& p) {
    try {
        if (id == "garnet") {
            env::GarnetParams g;
            g.n_states = p.value("n_states", g.n_states);
            g.n_actions = p.value("n_actions", g.n_actions);
            g.seed = p.value("seed", g.seed);
            g.kernel_scale_max = p.value("kernel_scale_max", g.kernel_scale_max);
            g.reward_scale_max = p.value("reward_scale_max", g.reward_scale_max);
            return env::garnet(g);
        }
        if (id == "example_a") {
            const auto r = p.value("r", numvec{1.0, 2.0, 4.0});
            if (r.size() != 3) throw config_error("example_a needs three rewards");
            return env::example_a(r[0], r[1], r[2]).nominal;
        }
        if (id == "recycling_robot") {
            env::RecyclingParams r;
            r.alpha = p.value("alpha", r.alpha);
            r.beta = p.value("beta", r.beta);
            r.r_search = p.value("r_search", r.r_search);
            r.r_wait = p.value("r_wait", r.r_wait);
            r.rescue_penalty = p.value("rescue_penalty", r.rescue_penalty);
            return env::recycling_robot(r);
        }
        if (id == "inventory") {
            env::InventoryParams i;
            i.capacity = p.value("capacity", i.capacity);
            i.max_order = p.value("max_order", i.max_order);
            i.demand = p.value("demand", i.demand);
            i.penalty = p.value("penalty", i.penalty);
            i.hold_rate = p.value("hold_rate", i.hold_rate);
            i.price = p.value("price", i.price);
            i.order_rate = p.value("order_rate", i.order_rate);
            return env::inventory(i);
        }
        if (id == "one_loop") {
            const auto ol = env::one_loop();
            return p.value("perturbed", false) ? ol.perturbed : ol.nominal;
        }
        if (id == "frozen_lake") return env::frozen_lake_4x4(p.value("slip", 2.0 / 3.0));
        if (id == "file") {
            std::ifstream f(p.at("path").get<std::string>());
            if (!f) throw config_error("cannot open MDP file");
            json j;
            f >> j;
            auto mdp = mdp_from_json(j);
            if (auto v = validate(mdp)) throw config_error("invalid MDP file: " + v->message);
            return mdp;
        }
    } catch (const config_error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error("environment '" + id + "': " + e.what());
    }
    throw config_error("unknown environment id '" + id + "'");
}

inline Policy make_policy(const json& j, const TabularMDP& mdp) {
    if (j.is_string()) {
        if (j.get<std::string>() == "uniform") return Policy::uniform(mdp.n_states(), mdp.n_actions());
        throw config_error("unknown policy '" + j.get<std::string>() + "'");
    }
    try {
        Policy pi(Matrix::from_rows(j.get<std::vector<numvec>>()));
        if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
            throw config_error("policy shape does not match the environment");
        if (auto v = validate(pi)) throw config_error(v->message);
        return pi;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error(std::string("policy: ") + e.what());
    }
}

} // namespace rarl::harness
