#include "rarl/harness/experiments.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace rarl;
using namespace rarl::harness;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string first_line(const std::string& path) {
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    return line;
}

std::size_t line_count(const std::string& path) {
    std::ifstream f(path);
    std::size_t n = 0;
    for (std::string line; std::getline(f, line);) ++n;
    return n;
}

std::string scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("rarl_test_" + name);
    std::filesystem::remove_all(dir);
    return dir.string();
}

ExperimentConfig make_config(const std::string& text, const std::string& out) {
    auto c = config_from_json(json::parse(text));
    c.output_dir = out;
    return c;
}

ExperimentConfig small_eval(const std::string& out) {
    return make_config(R"({
        "environment": {"id": "garnet", "params": {"n_states": 4, "n_actions": 2, "seed": 3}},
        "uncertainty": {"kind": "contamination", "delta": 0.2},
        "algorithm": "td",
        "n_iters": 300, "n_seeds": 4, "base_seed": 11, "record_every": 10
    })", out);
}

} // namespace

TEST(Seeds, StreamsDependOnIndexAndBase) {
    EXPECT_EQ(stream_seed(5, 3), stream_seed(5, 3));
    EXPECT_NE(stream_seed(5, 3), stream_seed(5, 4));
    EXPECT_NE(stream_seed(5, 3), stream_seed(6, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(stream_seed(0, i));
    EXPECT_EQ(seen.size(), 1000u);
}

TEST(Stats, NearestRankPercentile) {
    const numvec x{5, 1, 4, 2, 3};
    EXPECT_EQ(percentile(x, 100), 5);
    EXPECT_EQ(percentile(x, 50), 3);
    EXPECT_EQ(percentile(x, 20), 1);
    EXPECT_EQ(percentile(x, 21), 2);
    EXPECT_EQ(percentile(x, 5), 1);
    EXPECT_EQ(percentile(x, 95), 5);
    EXPECT_THROW(percentile({}, 50), std::invalid_argument);
    numvec hundred(100);
    for (std::size_t i = 0; i < 100; ++i) hundred[i] = prec_t(100 - i);
    EXPECT_EQ(percentile(hundred, 95), 95);
    EXPECT_EQ(percentile(hundred, 5), 5);
}

TEST(Stats, EnvelopeOfOneCurveIsTheCurve) {
    const auto e = envelope({{1.0, 2.0, 3.0}});
    EXPECT_EQ(e.mean, (numvec{1, 2, 3}));
    EXPECT_EQ(e.p95, e.mean);
    EXPECT_EQ(e.p05, e.mean);
}

TEST(Stats, ModeBreaksTiesLow) {
    EXPECT_EQ(mode(std::vector<int>{3, 1, 3, 1, 2}), 1);
    EXPECT_EQ(mode(std::vector<int>{3, 3, 1}), 3);
}

TEST(Stats, ParallelMapCapturesErrors) {
    auto r = parallel_map<int>(6, 3, [](std::size_t i) -> int {
        if (i == 4) throw std::runtime_error("boom");
        return int(i * i);
    });
    for (std::size_t i = 0; i < 6; ++i) {
        if (i == 4) {
            EXPECT_FALSE(r[i].value.has_value());
            EXPECT_EQ(r[i].error, "boom");
        } else {
            EXPECT_EQ(*r[i].value, int(i * i));
        }
    }
}

TEST(Config, Errors) {
    EXPECT_THROW(config_from_json(json::parse(R"({"algorithm": "nope"})")), config_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"uncertainty": {"kind": "tv", "delta": -1}})")), config_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"uncertainty": {"kind": "huh", "delta": 0.1}})")), config_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"n_seeds": 0})")), config_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"estimator": {"psi": 0.9}, "uncertainty": {"kind": "kl", "delta": 0.1}})")),
                 config_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"offset": {"kind": "median"}})")), config_error);
    EXPECT_THROW(load_config("/nonexistent/config.json"), config_error);
    EXPECT_THROW(make_environment("mars_rover", json::object()), config_error);
    EXPECT_THROW(make_environment("garnet", json{{"n_states", 0}}), config_error);
    const auto mdp = make_environment("one_loop", json::object());
    EXPECT_THROW(make_policy(json::parse("[[1, 0]]"), mdp), config_error);
    EXPECT_THROW(make_policy(json::parse("[[0.7, 0.7], [1, 0]]"), mdp), config_error);
}

TEST(Config, MalformedFile) {
    const auto dir = scratch("malformed");
    std::filesystem::create_directories(dir);
    write_text(dir + "/c.json", "{ not json");
    EXPECT_THROW(load_config(dir + "/c.json"), config_error);
}

TEST(Config, MdpFileEnvironment) {
    const auto dir = scratch("mdpfile");
    std::filesystem::create_directories(dir);
    write_text(dir + "/m.json", to_json(env::one_loop().nominal).dump());
    EXPECT_EQ(make_environment("file", json{{"path", dir + "/m.json"}}), env::one_loop().nominal);
}

TEST(Eval, OutputsAndHeaders) {
    const auto dir = scratch("eval");
    auto c = small_eval(dir);
    c.write_traces = true;
    const auto s = run_eval_experiment(c, 1);
    EXPECT_EQ(first_line(dir + "/trace.csv"), "iter,mean,p95,p05,baseline");
    EXPECT_EQ(line_count(dir + "/trace.csv"), 1u + 30u);
    EXPECT_EQ(first_line(dir + "/runs/seed_0.csv"), "iter,f_value,cost");
    EXPECT_EQ(line_count(dir + "/runs/seed_0.csv"), 1u + 300u);
    EXPECT_TRUE(std::filesystem::exists(dir + "/plot.svg"));
    const auto summary = json::parse(read_file(dir + "/summary.json"));
    EXPECT_EQ(summary["finals"].size(), 4u);
    EXPECT_EQ(s.failures, 0u);
}

TEST(Eval, ReproducibleAcrossJobCounts) {
    const auto a = scratch("jobs1"), b = scratch("jobs2");
    run_eval_experiment(small_eval(a), 1);
    run_eval_experiment(small_eval(b), 2);
    EXPECT_EQ(read_file(a + "/trace.csv"), read_file(b + "/trace.csv"));
    EXPECT_EQ(read_file(a + "/summary.json"), read_file(b + "/summary.json"));
}

TEST(Eval, ZeroRadiusBaselineIsNominalGain) {
    auto c = small_eval(scratch("nominal"));
    c.spec = UncertaintySetSpec::tv(0.0);
    const auto s = run_eval_experiment(c, 1);
    const auto mdp = make_environment(c.environment, c.environment_params);
    EXPECT_NEAR(s.baseline, gain_and_bias(mdp, Policy::uniform(4, 2)).gain, 1e-7);
}

TEST(Eval, SingleSeedEnvelopeCollapses) {
    const auto dir = scratch("oneseed");
    auto c = small_eval(dir);
    c.n_seeds = 1;
    run_eval_experiment(c, 1);
    std::ifstream f(dir + "/trace.csv");
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string iter, mean_s, p95, p05;
        std::getline(ss, iter, ',');
        std::getline(ss, mean_s, ',');
        std::getline(ss, p95, ',');
        std::getline(ss, p05, ',');
        EXPECT_EQ(mean_s, p95);
        EXPECT_EQ(mean_s, p05);
    }
}

TEST(Control, OneLoopPolicyFile) {
    const auto dir = scratch("control");
    auto c = make_config(R"({
        "environment": {"id": "one_loop"},
        "uncertainty": {"kind": "contamination", "delta": 0.4},
        "algorithm": "q", "n_iters": 20000, "n_seeds": 3, "record_every": 100
    })", dir);
    const auto s = run_control_experiment(c, 1);
    const auto pol = json::parse(read_file(dir + "/policy.json"));
    EXPECT_EQ(pol["planner"][env::loop::s1].get<index_t>(), env::loop::left);
    EXPECT_EQ(s.modal_policy[env::loop::s1], env::loop::left);
    EXPECT_EQ(pol["per_seed"].size(), 3u);
}

TEST(Plan, ExampleAFiniteSet) {
    const auto dir = scratch("plan");
    auto c = make_config(R"({
        "environment": {"id": "example_a", "params": {"finite_set": true}},
        "policy": [[1], [1], [1]]
    })", dir);
    const auto j = run_plan(c);
    EXPECT_NEAR(j["evaluation"]["gain"].get<prec_t>(), 3.0, 1e-8);
    EXPECT_TRUE(std::filesystem::exists(dir + "/plan.json"));
}

TEST(Sweep, SingleGridPoint) {
    const auto dir = scratch("sweep1");
    auto c = make_config(R"({
        "environment": {"id": "one_loop"},
        "uncertainty": {"kind": "contamination", "delta": 0.4},
        "sweep": {"family": "one_loop", "grid": [0.0], "trainer": "planner"}
    })", dir);
    const auto s = run_robustness_sweep(c, 1);
    EXPECT_EQ(first_line(dir + "/sweep.csv"), "perturbation,robust_gain,nonrobust_gain");
    EXPECT_EQ(line_count(dir + "/sweep.csv"), 2u);
    // at zero perturbation both policies are evaluated on the nominal kernel
    EXPECT_NEAR(s.robust_gain[0], 0.0, 1e-12);
    EXPECT_NEAR(s.nonrobust_gain[0], 1.0, 1e-12);
}

TEST(Sweep, OneLoopCrossover) {
    auto c = make_config(R"({
        "environment": {"id": "one_loop"},
        "uncertainty": {"kind": "contamination", "delta": 0.4},
        "sweep": {"family": "one_loop", "grid": [0.0, 1.0], "trainer": "planner"}
    })", scratch("sweep2"));
    const auto s = run_robustness_sweep(c, 1);
    EXPECT_NEAR(s.nonrobust_gain[1], -0.5, 1e-12);
    EXPECT_NEAR(s.robust_gain[1], 0.0, 1e-12);
    EXPECT_GE(s.robust_gain[1], s.nonrobust_gain[1]);
}

TEST(Sweep, UnknownFamily) {
    auto c = make_config(R"({
        "environment": {"id": "one_loop"},
        "sweep": {"family": "weather", "grid": [0.0], "trainer": "planner"}
    })", scratch("sweep3"));
    EXPECT_THROW(run_robustness_sweep(c, 1), config_error);
}

TEST(SupportCheck, PassesAndNegativeControlFails) {
    auto c = make_config(R"({
        "support_check": {"instances": 6, "mlmc_samples": 4000}
    })", scratch("check"));
    for (const auto& r : run_support_check(c)) EXPECT_TRUE(r.pass) << r.name << " " << r.kind << " " << r.measured;
    c.support_check["corrupt_delta"] = 2.0;
    const auto rows = run_support_check(c);
    EXPECT_TRUE(std::any_of(rows.begin(), rows.end(), [](const CheckRow& r) { return !r.pass; }));
    EXPECT_EQ(first_line(c.output_dir + "/support_check.csv"), "check,kind,measured,tolerance,pass");
}
