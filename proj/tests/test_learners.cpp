#include "rarl/environments.hpp"
#include "rarl/learners.hpp"
#include "rarl/planners.hpp"

#include <gtest/gtest.h>

using namespace rarl;

namespace {

TabularMDP small_mdp(std::size_t ns, std::size_t na, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<prec_t> u(0.0, 1.0);
    Matrix k(ns * na, ns), r(ns, na);
    for (std::size_t i = 0; i < ns * na; ++i) {
        prec_t sum = 0;
        for (auto& x : k.row(i)) sum += (x = u(rng) + 0.05);
        for (auto& x : k.row(i)) x /= sum;
    }
    for (index_t s = 0; s < ns; ++s)
        for (index_t a = 0; a < na; ++a) r(s, a) = 4 * u(rng) - 2;
    return {ns, na, std::move(k), std::move(r)};
}

/// Optimal gain by enumerating every deterministic policy
prec_t optimal_gain_by_enumeration(const TabularMDP& m) {
    const std::size_t ns = m.n_states(), na = m.n_actions();
    std::vector<index_t> actions(ns, 0);
    prec_t best = -std::numeric_limits<prec_t>::infinity();
    while (true) {
        best = std::max(best, gain_and_bias(m, Policy::deterministic(actions, na)).gain);
        std::size_t i = 0;
        while (i < ns && ++actions[i] == na) actions[i++] = 0;
        if (i == ns) break;
    }
    return best;
}

prec_t tail_mean(const RunTrace& t, std::size_t from) {
    prec_t s = 0;
    for (std::size_t i = from; i < t.records.size(); ++i) s += t.records[i].f_value;
    return s / prec_t(t.records.size() - from);
}

} // namespace

TEST(StepSchedule, ConstantAndRobbinsMonro) {
    EXPECT_EQ(StepSchedule::constant(0.01)(12345), 0.01);
    const auto rm = StepSchedule::robbins_monro(2.0, 10.0);
    EXPECT_DOUBLE_EQ(rm(0), 0.2);
    EXPECT_DOUBLE_EQ(rm(90), 0.02);
    EXPECT_TRUE(rm.is_robbins_monro());
    EXPECT_THROW(StepSchedule::constant(0.0), std::invalid_argument);
    EXPECT_THROW(StepSchedule::robbins_monro(1.0, 0.0), std::invalid_argument);
}

TEST(StepSchedule, RobbinsMonroConditions) {
    const prec_t c = 1.5, o = 4.0;
    const auto rm = StepSchedule::robbins_monro(c, o);
    prec_t sum = 0, sq = 0;
    const std::size_t n = 1'000'000;
    for (std::size_t i = 0; i < n; ++i) {
        sum += rm(i);
        sq += rm(i) * rm(i);
    }
    // harmonic growth of the sum, square summability
    EXPECT_GE(sum, c * std::log((n + o) / o) - 1e-9);
    EXPECT_LE(sq, c * c * (1 / (o * o) + 1 / o));
}

TEST(GreedyPolicy, Examples) {
    QFn q(1, 2);
    q(0, 0) = 1;
    EXPECT_EQ(greedy_policy(q).actions(), (std::vector<index_t>{0}));
    q(0, 0) = 0;
    EXPECT_EQ(greedy_policy(q).actions(), (std::vector<index_t>{0}));
    QFn q2(2, 2);
    q2(0, 1) = 1;
    q2(1, 0) = 2;
    q2(1, 1) = 1;
    EXPECT_EQ(greedy_policy(q2).actions(), (std::vector<index_t>{1, 0}));
}

TEST(GreedyPolicy, ShiftInvariant) {
    Rng rng(3);
    std::uniform_real_distribution<prec_t> u(-10, 10);
    for (int trial = 0; trial < 100; ++trial) {
        QFn q(4, 3);
        for (auto& x : q.flat()) x = std::round(u(rng));
        QFn shifted = q;
        const prec_t c = u(rng);
        for (auto& x : shifted.flat()) x += c;
        EXPECT_EQ(greedy_policy(q).actions(), greedy_policy(shifted).actions());
    }
}

TEST(RobustRviTd, FixedPointStaysPut) {
    // deterministic kernel and contamination: the sampled operator is exact
    TabularMDP m(3, 1, Matrix::from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}), Matrix::from_rows({{1}, {-2}, {0.5}}));
    const auto pi = Policy::uniform(3, 1);
    const auto spec = UncertaintySetSpec::contamination(0.3);
    const auto plan = robust_rvi_eval(m, pi, spec, OffsetFn::mean());
    ValueFn v0 = plan.v;
    for (auto& x : v0) x += plan.gain;
    const KernelSampler sampler(m);
    Rng rng(1);
    LearnerOptions opts;
    opts.n_iters = 500;
    const auto t = robust_rvi_td(sampler, m, pi, spec, OffsetFn::mean(), StepSchedule::constant(0.1), opts, {}, rng, v0);
    for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(t.final_v[s], v0[s], 1e-8);
}

TEST(RobustRviTd, NonRobustConvergesToNominalGain) {
    const auto m = small_mdp(5, 2, 42);
    const auto pi = Policy::uniform(5, 2);
    const prec_t g = gain_and_bias(m, pi).gain;
    const KernelSampler sampler(m);
    Rng rng(7);
    LearnerOptions opts;
    opts.n_iters = 50000;
    const auto t = robust_rvi_td(sampler, m, pi, UncertaintySetSpec::contamination(0.0), OffsetFn::mean(),
                                 StepSchedule::constant(0.01), opts, {}, rng);
    EXPECT_NEAR(t.final_f(), g, 0.05);
}

TEST(RobustRviTd, GarnetContaminationTailAverage) {
    const auto m = env::garnet(5, 3, 0);
    const auto pi = Policy::uniform(5, 3);
    const auto spec = UncertaintySetSpec::contamination(0.4);
    const prec_t g = robust_rvi_eval(m, pi, spec, OffsetFn::mean()).gain;
    const KernelSampler sampler(m);
    Rng rng(11);
    LearnerOptions opts;
    opts.n_iters = 50000;
    const auto t = robust_rvi_td(sampler, m, pi, spec, OffsetFn::mean(), StepSchedule::constant(0.01), opts, {}, rng);
    EXPECT_NEAR(tail_mean(t, 25000), g, 0.05);
}

TEST(RobustRviTd, TraceInvariants) {
    const auto m = env::garnet(4, 2, 3);
    const auto pi = Policy::uniform(4, 2);
    const auto spec = UncertaintySetSpec::kl(0.2);
    const KernelSampler sampler(m);
    LearnerOptions opts;
    opts.n_iters = 300;
    opts.snapshot_every = 7;
    const auto offset = OffsetFn::weighted({0.1, 0.2, 0.3, 0.4});
    Rng r1(5), r2(5);
    const auto a = robust_rvi_td(sampler, m, pi, spec, offset, StepSchedule::constant(0.05), opts, {}, r1);
    const auto b = robust_rvi_td(sampler, m, pi, spec, offset, StepSchedule::constant(0.05), opts, {}, r2);
    ASSERT_EQ(a.records.size(), 300u);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        // bit-identical replay
        EXPECT_EQ(a.records[i].f_value, b.records[i].f_value);
        EXPECT_EQ(a.records[i].cost, b.records[i].cost);
        EXPECT_EQ(a.records[i].iter, i + 1);
        if (i > 0) EXPECT_GE(a.records[i].cost, a.records[i - 1].cost);
    }
    ASSERT_EQ(a.snapshots.size(), 300u / 7);
    for (const auto& [n, v] : a.snapshots) EXPECT_EQ(offset(v), a.records[n - 1].f_value);
}

TEST(RobustRviTd, DivergenceGuard) {
    TabularMDP m(1, 1, Matrix::from_rows({{1}}), Matrix::from_rows({{1e6}}));
    const KernelSampler sampler(m);
    Rng rng(0);
    LearnerOptions opts;
    opts.n_iters = 10;
    opts.divergence_bound = 100;
    EXPECT_THROW(robust_rvi_td(sampler, m, Policy::uniform(1, 1), UncertaintySetSpec::contamination(0.1),
                               OffsetFn::reference(0), StepSchedule::constant(0.5), opts, {}, rng),
                 divergence_error);
}

TEST(RobustRviTd, StaysBoundedOverLongRuns) {
    const auto m = env::garnet(5, 3, 0);
    const auto pi = Policy::uniform(5, 3);
    for (const auto& spec : {UncertaintySetSpec::contamination(0.4), UncertaintySetSpec::tv(0.2)}) {
        const KernelSampler sampler(m);
        Rng rng(2);
        LearnerOptions opts;
        opts.n_iters = 100000;
        opts.snapshot_every = 1;
        const auto t = robust_rvi_td(sampler, m, pi, spec, OffsetFn::mean(), StepSchedule::constant(0.01), opts, {}, rng);
        prec_t sup = 0;
        for (const auto& [n, v] : t.snapshots) sup = std::max(sup, norm_inf(v));
        EXPECT_LE(sup, 1e6) << to_string(spec.kind());
    }
}

TEST(RobustRviQ, SingleActionMatchesTd) {
    const auto m = env::garnet(4, 1, 9);
    const auto spec = UncertaintySetSpec::chi2(0.3);
    const KernelSampler sampler(m);
    LearnerOptions opts;
    opts.n_iters = 200;
    Rng r1(3), r2(3);
    const auto td = robust_rvi_td(sampler, m, Policy::uniform(4, 1), spec, OffsetFn::mean(),
                                  StepSchedule::constant(0.05), opts, {}, r1);
    const auto q = robust_rvi_q(sampler, m, spec, OffsetFn::mean(), StepSchedule::constant(0.05), opts, {}, r2);
    for (std::size_t i = 0; i < td.records.size(); ++i) EXPECT_EQ(td.records[i].f_value, q.records[i].f_value);
    EXPECT_EQ(td.final_v, q.final_v);
}

TEST(RobustRviQ, NonRobustConvergesToOptimalGain) {
    const auto m = small_mdp(4, 2, 8);
    const prec_t g_star = optimal_gain_by_enumeration(m);
    const KernelSampler sampler(m);
    Rng rng(17);
    LearnerOptions opts;
    opts.n_iters = 50000;
    const auto t = robust_rvi_q(sampler, m, UncertaintySetSpec::contamination(0.0), OffsetFn::mean(),
                                StepSchedule::constant(0.01), opts, {}, rng);
    EXPECT_NEAR(t.final_f(), g_star, 0.05);
}

TEST(RobustRviQ, OneLoopNonRobustPrefersRight) {
    const auto ol = env::one_loop();
    const KernelSampler sampler(ol.nominal);
    Rng rng(4);
    LearnerOptions opts;
    opts.n_iters = 20000;
    const auto t = robust_rvi_q(sampler, ol.nominal, UncertaintySetSpec::contamination(0.0), OffsetFn::mean(),
                                StepSchedule::constant(0.01), opts, {}, rng);
    EXPECT_EQ(greedy_policy(*t.final_q).actions()[env::loop::s1], env::loop::right);
}

TEST(RobustRviQ, OneLoopLargeRadiusPrefersLeft) {
    // the robust optimum at s1 switches to a_l once delta exceeds 1/3
    const auto ol = env::one_loop();
    const KernelSampler sampler(ol.nominal);
    Rng rng(4);
    LearnerOptions opts;
    opts.n_iters = 20000;
    const auto t = robust_rvi_q(sampler, ol.nominal, UncertaintySetSpec::contamination(0.4), OffsetFn::mean(),
                                StepSchedule::constant(0.01), opts, {}, rng);
    EXPECT_EQ(greedy_policy(*t.final_q).actions()[env::loop::s1], env::loop::left);
}

TEST(RobustRviQ, ShapeMismatchThrows) {
    const auto m = env::garnet(3, 2, 1);
    const KernelSampler sampler(m);
    Rng rng(0);
    EXPECT_THROW(robust_rvi_q(sampler, m, UncertaintySetSpec::tv(0.1), OffsetFn::mean(), StepSchedule::constant(0.1),
                              {}, {}, rng, QFn(2, 2)),
                 std::invalid_argument);
}
