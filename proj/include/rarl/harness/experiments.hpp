#pragma once

#include "rarl/harness/config.hpp"
#include "rarl/harness/plot.hpp"
#include "rarl/harness/stats.hpp"
#include "rarl/planners.hpp"

#include <cstdio>
#include <filesystem>

namespace rarl::harness {

/// Too many seeds failed (exit code 2)
class run_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string num(prec_t v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Header of trace.csv
inline constexpr const char* TRACE_HEADER = "iter,mean,p95,p05,baseline";
/// Header of sweep.csv
inline constexpr const char* SWEEP_HEADER = "perturbation,robust_gain,nonrobust_gain";

struct CurveSet {
    std::vector<std::size_t> iters;
    std::vector<numvec> curves; ///< one per successful seed
    std::vector<std::string> errors;
    std::vector<RunTrace> traces;
};

namespace detail {

inline std::vector<std::size_t> recorded_iters(std::size_t n_iters, std::size_t every) {
    std::vector<std::size_t> it;
    for (std::size_t n = every; n <= n_iters; n += every) it.push_back(n);
    if (it.empty() || it.back() != n_iters) it.push_back(n_iters);
    return it;
}

inline numvec extract(const RunTrace& t, const std::vector<std::size_t>& iters) {
    numvec out;
    out.reserve(iters.size());
    for (std::size_t n : iters) out.push_back(t.records.at(n - 1).f_value);
    return out;
}

inline std::string trace_csv(const std::vector<std::size_t>& iters, const Envelope& e, prec_t baseline) {
    std::string s = std::string(TRACE_HEADER) + "\n";
    for (std::size_t i = 0; i < iters.size(); ++i)
        s += std::to_string(iters[i]) + "," + num(e.mean[i]) + "," + num(e.p95[i]) + "," + num(e.p05[i]) + "," +
             num(baseline) + "\n";
    return s;
}

inline std::string envelope_svg(const std::string& title, const std::string& ylabel,
                                const std::vector<std::size_t>& iters, const Envelope& e, prec_t baseline) {
    numvec x(iters.begin(), iters.end());
    LinePlot plot;
    plot.title = title;
    plot.xlabel = "iteration";
    plot.ylabel = ylabel;
    plot.bands.push_back({x, e.p05, e.p95, "#1f77b4"});
    plot.series.push_back({"mean", x, e.mean, "#1f77b4", false});
    plot.series.push_back({"planner", {x.front(), x.back()}, {baseline, baseline}, "#d62728", true});
    return plot.render();
}

inline void check_failures(const CurveSet& cs, std::size_t n_seeds) {
    if (cs.errors.size() * 10 > n_seeds) {
        std::string msg = std::to_string(cs.errors.size()) + " of " + std::to_string(n_seeds) + " seeds failed";
        if (!cs.errors.empty()) msg += ": " + cs.errors.front();
        throw run_failure(msg);
    }
}

inline void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

inline void write_traces(const std::string& dir, const std::vector<RunTrace>& traces) {
    ensure_dir(dir + "/runs");
    for (std::size_t i = 0; i < traces.size(); ++i)
        write_text(dir + "/runs/seed_" + std::to_string(i) + ".csv", trace_to_csv(traces[i]));
}

} // namespace detail

/// Robust RVI TD over all seeds; curves of f(V_n)
inline CurveSet run_td_seeds(const ExperimentConfig& c, const TabularMDP& mdp, const Policy& pi, std::size_t jobs,
                             bool keep_traces = false) {
    const KernelSampler sampler(mdp);
    LearnerOptions opts;
    opts.n_iters = c.n_iters;
    auto results = parallel_map<RunTrace>(c.n_seeds, jobs, [&](std::size_t i) {
        Rng rng(stream_seed(c.base_seed, i));
        return robust_rvi_td(sampler, mdp, pi, c.spec, c.offset, c.schedule, opts, c.estimator, rng);
    });
    CurveSet cs;
    cs.iters = detail::recorded_iters(c.n_iters, c.record_every);
    for (auto& r : results) {
        if (!r.value) {
            cs.errors.push_back(r.error);
            continue;
        }
        cs.curves.push_back(detail::extract(*r.value, cs.iters));
        if (keep_traces) cs.traces.push_back(std::move(*r.value));
    }
    return cs;
}

/// Robust RVI Q-learning over all seeds; curves of f(Q_n), traces kept for the final Q
inline CurveSet run_q_seeds(const ExperimentConfig& c, const TabularMDP& mdp, std::size_t jobs) {
    const KernelSampler sampler(mdp);
    LearnerOptions opts;
    opts.n_iters = c.n_iters;
    auto results = parallel_map<RunTrace>(c.n_seeds, jobs, [&](std::size_t i) {
        Rng rng(stream_seed(c.base_seed, i));
        auto t = robust_rvi_q(sampler, mdp, c.spec, c.offset, c.schedule, opts, c.estimator, rng);
        t.records.shrink_to_fit();
        return t;
    });
    CurveSet cs;
    cs.iters = detail::recorded_iters(c.n_iters, c.record_every);
    for (auto& r : results) {
        if (!r.value) {
            cs.errors.push_back(r.error);
            continue;
        }
        cs.curves.push_back(detail::extract(*r.value, cs.iters));
        cs.traces.push_back(std::move(*r.value));
    }
    return cs;
}

struct EvalSummary {
    prec_t baseline = 0;
    prec_t final_mean = 0;
    numvec finals;
    std::size_t failures = 0;
};

/**
 * Policy evaluation experiment: robust RVI TD over n_seeds streams, the
 * per-iteration mean and 95/5 percentiles of f(V_n), and the model-based
 * robust gain as a reference. Writes trace.csv, plot.svg and summary.json.
 */
inline EvalSummary run_eval_experiment(const ExperimentConfig& c, std::size_t jobs = 1) {
    const TabularMDP mdp = make_environment(c.environment, c.environment_params);
    const Policy pi = make_policy(c.policy, mdp);
    PlannerOptions popts;
    popts.tol = c.planner_tol;
    const prec_t baseline = robust_rvi_eval(mdp, pi, c.spec, c.offset, popts).gain;

    const auto cs = run_td_seeds(c, mdp, pi, jobs, c.write_traces);
    detail::check_failures(cs, c.n_seeds);
    const auto env = envelope(cs.curves);

    EvalSummary out;
    out.baseline = baseline;
    out.failures = cs.errors.size();
    for (const auto& curve : cs.curves) out.finals.push_back(curve.back());
    out.final_mean = env.mean.back();

    detail::ensure_dir(c.output_dir);
    write_text(c.output_dir + "/trace.csv", detail::trace_csv(cs.iters, env, baseline));
    if (c.write_traces) detail::write_traces(c.output_dir, cs.traces);
    write_text(c.output_dir + "/plot.svg",
               detail::envelope_svg("Robust RVI TD (" + to_string(c.spec.kind()) + ")", "f(V_n)", cs.iters, env,
                                    baseline));
    json summary{{"baseline", baseline}, {"final_mean", out.final_mean}, {"finals", out.finals},
                 {"failures", out.failures}, {"errors", cs.errors}};
    write_text(c.output_dir + "/summary.json", summary.dump(2) + "\n");
    return out;
}

struct ControlSummary {
    prec_t baseline = 0;
    prec_t final_mean = 0;
    numvec finals;
    std::vector<std::vector<index_t>> policies;
    std::vector<index_t> modal_policy;
    std::vector<index_t> planner_policy;
    std::size_t failures = 0;
};

/**
 * Control experiment: robust RVI Q-learning across seeds against the
 * model-based optimal robust gain. Writes trace.csv, plot.svg, policy.json
 * and summary.json.
 */
inline ControlSummary run_control_experiment(const ExperimentConfig& c, std::size_t jobs = 1) {
    const TabularMDP mdp = make_environment(c.environment, c.environment_params);
    PlannerOptions popts;
    popts.tol = c.planner_tol;
    const auto plan = robust_rvi_control(mdp, c.spec, c.offset, popts);

    const auto cs = run_q_seeds(c, mdp, jobs);
    detail::check_failures(cs, c.n_seeds);
    const auto env = envelope(cs.curves);

    ControlSummary out;
    out.baseline = plan.gain;
    out.failures = cs.errors.size();
    out.planner_policy = plan.policy.actions();
    for (const auto& t : cs.traces) {
        out.finals.push_back(t.final_f());
        out.policies.push_back(greedy_policy(*t.final_q).actions());
    }
    out.modal_policy = mode(out.policies);
    out.final_mean = env.mean.back();

    detail::ensure_dir(c.output_dir);
    write_text(c.output_dir + "/trace.csv", detail::trace_csv(cs.iters, env, plan.gain));
    if (c.write_traces) detail::write_traces(c.output_dir, cs.traces);
    write_text(c.output_dir + "/plot.svg",
               detail::envelope_svg("Robust RVI Q-learning (" + to_string(c.spec.kind()) + ")", "f(Q_n)", cs.iters,
                                    env, plan.gain));
    json pol{{"modal", out.modal_policy}, {"planner", out.planner_policy}, {"per_seed", out.policies}};
    write_text(c.output_dir + "/policy.json", pol.dump(2) + "\n");
    json summary{{"baseline", plan.gain}, {"final_mean", out.final_mean}, {"finals", out.finals},
                 {"failures", out.failures}, {"errors", cs.errors}};
    write_text(c.output_dir + "/summary.json", summary.dump(2) + "\n");
    return out;
}

/**
 * Model-based solution only: robust gain and relative values of the
 * configured policy, and the optimal robust Q, gain and greedy policy.
 * For example_a with params.finite_set = true the two-kernel set is used.
 */
inline json run_plan(const ExperimentConfig& c) {
    const TabularMDP mdp = make_environment(c.environment, c.environment_params);
    const Policy pi = make_policy(c.policy, mdp);
    PlannerOptions popts;
    popts.tol = c.planner_tol;
    auto solve = [&](const auto& model) {
        const auto ev = robust_rvi_eval(model, pi, c.offset, popts);
        const auto ctl = robust_rvi_control(model, c.offset, popts);
        std::vector<numvec> q;
        for (index_t s = 0; s < mdp.n_states(); ++s) {
            q.emplace_back();
            for (index_t a = 0; a < mdp.n_actions(); ++a) q.back().push_back(ctl.q(s, a));
        }
        return json{{"evaluation", {{"gain", ev.gain}, {"v", ev.v}, {"residual", ev.residual}}},
                    {"control",
                     {{"gain", ctl.gain}, {"q", q}, {"policy", ctl.policy.actions()}, {"residual", ctl.residual}}}};
    };
    json out;
    if (c.environment == "example_a" && c.environment_params.value("finite_set", false)) {
        const auto r = c.environment_params.value("r", numvec{1.0, 2.0, 4.0});
        const auto ex = env::example_a(r[0], r[1], r[2]);
        out = solve(FiniteSetModel(ex.nominal, ex.kernels));
    } else {
        out = solve(ParametricModel(mdp, c.spec));
    }
    out["uncertainty"] = to_json(c.spec);
    detail::ensure_dir(c.output_dir);
    write_text(c.output_dir + "/plan.json", out.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// robustness sweep
// ---------------------------------------------------------------------------

/**
 * Testing kernels for one grid value of a perturbation family:
 *  - "one_loop": mixture (1-t) nominal + t perturbed
 *  - "recycling": alpha, beta over {0.5-x, 0.5, 0.5+x} (clamped to [0,1])
 *  - "inventory_b": demand U_(m,b) with m fixed (sweep.m, default 0)
 *  - "inventory_m": demand U_(m,b) with b fixed (sweep.b, default 0.25)
 */
inline std::vector<TabularMDP> perturbation_family(const std::string& family, prec_t x, const json& params,
                                                   const json& sweep) {
    if (family == "one_loop") return {env::one_loop_mixture(x)};
    if (family == "recycling") {
        env::RecyclingParams base;
        base.r_search = params.value("r_search", base.r_search);
        base.r_wait = params.value("r_wait", base.r_wait);
        base.rescue_penalty = params.value("rescue_penalty", base.rescue_penalty);
        std::vector<TabularMDP> out;
        for (prec_t a : {0.5 - x, 0.5, 0.5 + x})
            for (prec_t b : {0.5 - x, 0.5, 0.5 + x}) {
                auto p = base;
                p.alpha = std::clamp(a, 0.0, 1.0);
                p.beta = std::clamp(b, 0.0, 1.0);
                out.push_back(env::recycling_robot(p));
            }
        return out;
    }
    if (family == "inventory_b" || family == "inventory_m") {
        env::InventoryParams ip;
        ip.capacity = params.value("capacity", ip.capacity);
        ip.max_order = params.value("max_order", ip.max_order);
        const std::size_t n = ip.capacity + 1;
        const std::size_t m = family == "inventory_b" ? sweep.value("m", std::size_t(0)) : std::size_t(x);
        const prec_t b = family == "inventory_b" ? x : sweep.value("b", 0.25);
        ip.demand = env::inventory_perturbed_demand(m, b, n);
        return {env::inventory(ip)};
    }
    throw config_error("unknown perturbation family '" + family + "'");
}

struct SweepSummary {
    numvec grid;
    numvec robust_gain;
    numvec nonrobust_gain;
    std::vector<index_t> robust_policy;
    std::vector<index_t> nonrobust_policy;
};

/**
 * Trains a robust policy (configured set) and a non-robust one (radius 0) on
 * the nominal environment, then evaluates both exactly on the perturbation
 * family at each grid value (worst gain over the family's kernels). Training
 * uses robust RVI Q-learning (modal greedy policy across seeds) or, with
 * sweep.trainer = "planner", the model-based solution.
 */
inline SweepSummary run_robustness_sweep(const ExperimentConfig& c, std::size_t jobs = 1) {
    const TabularMDP mdp = make_environment(c.environment, c.environment_params);
    const std::string family = c.sweep.value("family", std::string("one_loop"));
    const numvec grid = c.sweep.value("grid", numvec{0.0, 0.25, 0.5, 0.75, 1.0});
    const std::string trainer = c.sweep.value("trainer", std::string("q"));
    if (grid.empty()) throw config_error("sweep grid is empty");

    auto train = [&](const UncertaintySetSpec& spec) -> std::vector<index_t> {
        if (trainer == "planner") {
            PlannerOptions popts;
            popts.tol = c.planner_tol;
            return robust_rvi_control(mdp, spec, c.offset, popts).policy.actions();
        }
        if (trainer != "q") throw config_error("unknown trainer '" + trainer + "'");
        ExperimentConfig cc = c;
        cc.spec = spec;
        const auto cs = run_q_seeds(cc, mdp, jobs);
        detail::check_failures(cs, c.n_seeds);
        std::vector<std::vector<index_t>> pols;
        for (const auto& t : cs.traces) pols.push_back(greedy_policy(*t.final_q).actions());
        return mode(pols);
    };

    SweepSummary out;
    out.grid = grid;
    out.robust_policy = train(c.spec);
    out.nonrobust_policy = train(c.spec.with_delta(0.0));
    const Policy robust = Policy::deterministic(out.robust_policy, mdp.n_actions());
    const Policy plain = Policy::deterministic(out.nonrobust_policy, mdp.n_actions());
    for (prec_t x : grid) {
        const auto family_mdps = perturbation_family(family, x, c.environment_params, c.sweep);
        out.robust_gain.push_back(env::worst_gain(robust, family_mdps));
        out.nonrobust_gain.push_back(env::worst_gain(plain, family_mdps));
    }

    detail::ensure_dir(c.output_dir);
    std::string csv = std::string(SWEEP_HEADER) + "\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
        csv += num(grid[i]) + "," + num(out.robust_gain[i]) + "," + num(out.nonrobust_gain[i]) + "\n";
    write_text(c.output_dir + "/sweep.csv", csv);

    LinePlot plot;
    plot.title = "Worst-case average reward under perturbation (" + family + ")";
    plot.xlabel = "perturbation";
    plot.ylabel = "average reward";
    plot.series.push_back({"robust", grid, out.robust_gain, "#1f77b4", false});
    plot.series.push_back({"non-robust", grid, out.nonrobust_gain, "#ff7f0e", false});
    write_text(c.output_dir + "/sweep.svg", plot.render());
    json pol{{"robust", out.robust_policy}, {"nonrobust", out.nonrobust_policy}};
    write_text(c.output_dir + "/policies.json", pol.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// support check
// ---------------------------------------------------------------------------

struct CheckRow {
    std::string name;
    std::string kind;
    prec_t measured = 0;
    prec_t tolerance = 0;
    bool pass = false;
};

inline numvec random_simplex(std::size_t n, Rng& rng) {
    std::exponential_distribution<prec_t> e(1.0);
    numvec p(n);
    prec_t s = 0;
    for (auto& x : p) s += (x = e(rng));
    for (auto& x : p) x /= s;
    return p;
}

/**
 * Oracle agreement of support_exact with the grid oracle on random
 * instances (the closed form for contamination), and statistical unbiasedness of the MLMC estimator on a fixed
 * row. Config keys (support_check): instances, resolution, n_states,
 * mlmc_samples, kinds, corrupt_delta (multiplies the oracle's radius; a
 * negative control that must fail).
 */
inline std::vector<CheckRow> run_support_check(const ExperimentConfig& c) {
    const json& sc = c.support_check;
    const std::size_t instances = sc.value("instances", std::size_t(20));
    const int resolution = sc.value("resolution", 200);
    const std::size_t n = sc.value("n_states", std::size_t(4));
    const std::size_t mlmc_samples = sc.value("mlmc_samples", std::size_t(20000));
    const prec_t corrupt = sc.value("corrupt_delta", 1.0);
    const auto kinds = sc.value("kinds", std::vector<std::string>{"contamination", "tv", "chi2", "kl", "wasserstein"});
    const numvec deltas{0.1, 0.3, 0.6};

    std::vector<CheckRow> rows;
    Rng rng(stream_seed(c.base_seed, 0));
    for (const auto& kname : kinds) {
        const SetKind kind = set_kind_from_string(kname);
        const bool closed = kind == SetKind::contamination;
        prec_t worst = 0;
        for (std::size_t i = 0; i < instances; ++i) {
            const prec_t delta = deltas[i % deltas.size()];
            const auto spec = UncertaintySetSpec::make(kind, delta);
            const prec_t oracle_delta = closed ? std::min(1.0, delta * corrupt) : delta * corrupt;
            const numvec p = random_simplex(n, rng);
            numvec v(n);
            std::uniform_real_distribution<prec_t> u(-1.0, 1.0);
            for (auto& x : v) x = u(rng);
            const prec_t exact = support_exact(spec, p, v).value;
            prec_t oracle;
            if (closed) {
                // (1 - delta) p.V + delta min V
                oracle = (1 - oracle_delta) * dot(p, v) + oracle_delta * *std::min_element(v.begin(), v.end());
            } else {
                oracle = support_oracle_grid(UncertaintySetSpec::make(kind, oracle_delta), p, v, resolution);
            }
            worst = std::max(worst, std::abs(exact - oracle) / std::max(norm_inf(v), 1e-300));
        }
        const prec_t tol = closed ? 1e-9 : 0.02;
        rows.push_back({closed ? "closed-form" : "oracle-agreement", kname, worst, tol, worst <= tol});
    }

    const numvec p{0.2, 0.3, 0.5}, v{0.0, 1.0, 2.0};
    for (const auto& kname : kinds) {
        const SetKind kind = set_kind_from_string(kname);
        if (kind == SetKind::contamination) continue;
        const auto spec = UncertaintySetSpec::make(kind, 0.2);
        const TabularMDP m(3, 1, Matrix::from_rows({p, p, p}), Matrix(3, 1, 0.0));
        const KernelSampler sampler(m);
        numvec est(mlmc_samples);
        Rng r(stream_seed(c.base_seed, 1 + std::size_t(kind)));
        for (auto& x : est) x = mlmc_estimate_support(sampler, spec, 0, 0, v, c.estimator, r).value;
        const prec_t exact = support_exact(spec.with_delta(0.2 * corrupt), p, v).value;
        const prec_t se = standard_error(est);
        rows.push_back({"mlmc-unbiased", kname, std::abs(mean(est) - exact), 3.0 * se,
                        std::abs(mean(est) - exact) <= 3.0 * se});
    }
    detail::ensure_dir(c.output_dir);
    std::string csv = "check,kind,measured,tolerance,pass\n";
    for (const auto& r : rows)
        csv += r.name + "," + r.kind + "," + num(r.measured) + "," + num(r.tolerance) + "," + (r.pass ? "1" : "0") + "\n";
    write_text(c.output_dir + "/support_check.csv", csv);
    return rows;
}

} // namespace rarl::harness
