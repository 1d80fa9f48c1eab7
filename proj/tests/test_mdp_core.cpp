#include "rarl/environments.hpp"
#include "rarl/uncertainty.hpp"

#include <gtest/gtest.h>

using namespace rarl;

namespace {

TabularMDP random_mdp(std::size_t ns, std::size_t na, Rng& rng) {
    std::uniform_real_distribution<prec_t> u(0.0, 1.0);
    Matrix k(ns * na, ns), r(ns, na);
    for (std::size_t i = 0; i < ns * na; ++i) {
        prec_t sum = 0;
        for (auto& x : k.row(i)) sum += (x = u(rng) + 0.01);
        for (auto& x : k.row(i)) x /= sum;
    }
    for (index_t s = 0; s < ns; ++s)
        for (index_t a = 0; a < na; ++a) r(s, a) = 4 * u(rng) - 2;
    return {ns, na, std::move(k), std::move(r)};
}

numvec random_vec(std::size_t n, Rng& rng, prec_t scale = 5.0) {
    std::uniform_real_distribution<prec_t> u(-scale, scale);
    numvec v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

} // namespace

TEST(Validate, AcceptsSimplexRows) {
    TabularMDP m(2, 1, Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}), Matrix(2, 1, 0.0));
    EXPECT_FALSE(validate(m).has_value());
}

TEST(Validate, ReportsRowSum) {
    TabularMDP m(2, 1, Matrix::from_rows({{0.6, 0.6}, {0.5, 0.5}}), Matrix(2, 1, 0.0));
    auto v = validate(m);
    ASSERT_TRUE(v.has_value());
    EXPECT_EQ(v->message, "row sum 1.2 at (s=0,a=0)");
}

TEST(Validate, ReportsNegativeEntry) {
    TabularMDP m(2, 1, Matrix::from_rows({{0.5, 0.5}, {-0.1, 1.1}}), Matrix(2, 1, 0.0));
    auto v = validate(m);
    ASSERT_TRUE(v.has_value());
    EXPECT_NE(v->message.find("negative entry"), std::string::npos);
    EXPECT_EQ(v->state, 1u);
}

TEST(Validate, ShapeMismatchThrows) {
    EXPECT_THROW(TabularMDP(2, 2, Matrix(3, 2, 0.5), Matrix(2, 2, 0.0)), std::invalid_argument);
}

TEST(InducedChain, DeterministicPolicySelectsRow) {
    const auto ol = env::one_loop();
    const auto chain = induced_chain(ol.nominal, Policy::deterministic({env::loop::right, env::loop::right}, 2));
    EXPECT_EQ(chain.transition, Matrix::from_rows({{0, 1}, {0, 1}}));
    EXPECT_EQ(chain.reward, (numvec{-2.0, 1.0}));
}

TEST(InducedChain, UniformOverIdenticalRows) {
    TabularMDP m(2, 2, Matrix::from_rows({{0.3, 0.7}, {0.3, 0.7}, {1, 0}, {1, 0}}), Matrix(2, 2, 1.0));
    const auto chain = induced_chain(m, Policy::uniform(2, 2));
    EXPECT_NEAR(chain.transition(0, 0), 0.3, 1e-15);
    EXPECT_NEAR(chain.transition(0, 1), 0.7, 1e-15);
    EXPECT_NEAR(chain.transition(1, 0), 1.0, 1e-15);
}

TEST(Stationary, Examples) {
    EXPECT_NEAR(stationary_distribution(Matrix::from_rows({{1}}))[0], 1.0, 1e-12);
    const auto cyc = stationary_distribution(Matrix::from_rows({{0, 1}, {1, 0}}));
    EXPECT_NEAR(cyc[0], 0.5, 1e-9);
    EXPECT_NEAR(cyc[1], 0.5, 1e-9);
    const auto abs = stationary_distribution(Matrix::from_rows({{0, 1}, {0, 1}}));
    EXPECT_NEAR(abs[0], 0.0, 1e-9);
    EXPECT_NEAR(abs[1], 1.0, 1e-9);
}

TEST(Stationary, FixedPointOnRandomChains) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_mdp(5, 2, rng);
        const auto chain = induced_chain(m, Policy::uniform(5, 2));
        const auto mu = stationary_distribution(chain.transition);
        for (index_t t = 0; t < 5; ++t) {
            prec_t x = 0;
            for (index_t s = 0; s < 5; ++s) x += mu[s] * chain.transition(s, t);
            EXPECT_NEAR(x, mu[t], 1e-9);
        }
    }
}

TEST(Unichain, Examples) {
    EXPECT_TRUE(is_unichain(Matrix::from_rows({{0, 1}, {1, 0}})));
    EXPECT_FALSE(is_unichain(Matrix::from_rows({{1, 0}, {0, 1}})));
    EXPECT_TRUE(is_unichain(Matrix::from_rows({{1, 0}, {1, 0}})));
}

TEST(Span, Examples) {
    EXPECT_EQ(span(numvec{1, 1, 1}), 0.0);
    EXPECT_EQ(span(numvec{0, 2}), 2.0);
    EXPECT_EQ(span(numvec{-1, 3, 0}), 4.0);
}

TEST(GainBias, SingleState) {
    TabularMDP m(1, 1, Matrix::from_rows({{1}}), Matrix::from_rows({{0.7}}));
    const auto gb = gain_and_bias(m, Policy::uniform(1, 1));
    EXPECT_NEAR(gb.gain, 0.7, 1e-12);
    EXPECT_NEAR(gb.bias[0], 0.0, 1e-12);
}

TEST(GainBias, TwoStateCycleMeanNormalization) {
    TabularMDP m(2, 1, Matrix::from_rows({{0, 1}, {1, 0}}), Matrix::from_rows({{0}, {1}}));
    const auto gb = gain_and_bias(m, Policy::uniform(2, 1), OffsetFn::mean());
    // hand solve: V0 = 0 - g + V1, V1 = 1 - g + V0, V0 + V1 = 0
    EXPECT_NEAR(gb.gain, 0.5, 1e-12);
    EXPECT_NEAR(gb.bias[0], -0.25, 1e-12);
    EXPECT_NEAR(gb.bias[1], 0.25, 1e-12);
}

TEST(GainBias, ExampleAStationaryNormalized) {
    const auto ex = env::example_a(1, 2, 4);
    const auto gb = gain_and_stationary_bias(ex.nominal, ex.policy);
    EXPECT_NEAR(gb.gain, 3.0, 1e-12);
    EXPECT_NEAR(gb.bias[0], -2.5, 1e-9);
    EXPECT_NEAR(gb.bias[1], -0.5, 1e-9);
    EXPECT_NEAR(gb.bias[2], 0.5, 1e-9);
}

TEST(GainBias, ReferenceNormalizationPinsState) {
    Rng rng(5);
    const auto m = random_mdp(4, 2, rng);
    const auto gb = gain_and_bias(m, Policy::uniform(4, 2), OffsetFn::reference(2));
    EXPECT_NEAR(gb.bias[2], 0.0, 1e-12);
}

TEST(GainBias, MultichainThrows) {
    TabularMDP m(2, 1, Matrix::from_rows({{1, 0}, {0, 1}}), Matrix::from_rows({{0}, {1}}));
    EXPECT_THROW(gain_and_bias(m, Policy::uniform(2, 1)), multichain_error);
}

TEST(GainBias, BellmanIdentityAndStationaryCrossCheck) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t ns = 1 + trial % 6, na = 1 + trial % 3;
        const auto m = random_mdp(ns, na, rng);
        const Policy pi = Policy::uniform(ns, na);
        const auto gb = gain_and_bias(m, pi);
        EXPECT_LE(bellman_error(m, pi, gb), 1e-9);
        prec_t sum = 0;
        for (prec_t x : gb.bias) sum += x;
        EXPECT_NEAR(sum, 0.0, 1e-9);
        const auto chain = induced_chain(m, pi);
        EXPECT_NEAR(gb.gain, dot(stationary_distribution(chain.transition), chain.reward), 1e-8);
    }
}

TEST(OffsetFn, Axioms) {
    Rng rng(2);
    const std::vector<OffsetFn> offsets{OffsetFn::mean(), OffsetFn::reference(1),
                                        OffsetFn::weighted({0.1, 0.2, 0.3, 0.4})};
    for (const auto& f : offsets) {
        EXPECT_EQ(f(numvec(4, 1.0)), 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            const numvec x = random_vec(4, rng);
            const prec_t c = std::uniform_real_distribution<prec_t>(-3, 3)(rng);
            numvec shifted = x, scaled = x;
            for (auto& v : shifted) v += c;
            for (auto& v : scaled) v *= c;
            EXPECT_NEAR(f(shifted), f(x) + c, 1e-12);
            EXPECT_NEAR(f(scaled), c * f(x), 1e-12);
        }
    }
    EXPECT_THROW(OffsetFn::weighted({0.5, 0.6}), std::invalid_argument);
}

TEST(RobustResidual, ExampleACertificate) {
    const auto ex = env::example_a(1, 2, 4);
    const auto p1 = gain_and_stationary_bias(ex.nominal, ex.policy);
    const auto p2 = gain_and_stationary_bias(ex.nominal.with_kernel(ex.kernels[1]), ex.policy);
    EXPECT_NEAR(p2.bias[0], -1.5, 1e-9);
    auto support = [&](index_t s, index_t a, std::span<const prec_t> v) {
        return std::min(dot(ex.kernels[0].row(s + a), v), dot(ex.kernels[1].row(s + a), v));
    };
    const auto r1 = robust_bellman_residual(ex.nominal, ex.policy, support, 3.0, p1.bias);
    const auto r2 = robust_bellman_residual(ex.nominal, ex.policy, support, 3.0, p2.bias);
    EXPECT_LE(norm_inf(r1), 1e-12);
    EXPECT_GT(std::abs(r2[0]), 0.1);
}

TEST(RobustResidual, TranslationInvariant) {
    Rng rng(8);
    for (auto kind : {SetKind::contamination, SetKind::tv, SetKind::chi2, SetKind::kl, SetKind::wasserstein}) {
        const auto m = random_mdp(3, 2, rng);
        const auto spec = UncertaintySetSpec::make(kind, 0.3);
        const numvec v = random_vec(3, rng);
        numvec shifted = v;
        for (auto& x : shifted) x += 2.5;
        const auto a = robust_bellman_residual(m, Policy::uniform(3, 2), spec, 0.4, v);
        const auto b = robust_bellman_residual(m, Policy::uniform(3, 2), spec, 0.4, shifted);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-9) << to_string(kind);
    }
}

TEST(Json, MdpRoundTrip) {
    Rng rng(1);
    const auto m = random_mdp(3, 2, rng);
    const auto back = mdp_from_json(to_json(m));
    EXPECT_EQ(back.kernel(), m.kernel());
    EXPECT_EQ(back.rewards(), m.rewards());
}

TEST(GainVector, UnichainIsConstant) {
    const auto m = env::garnet(5, 2, 4);
    const auto pi = Policy::uniform(5, 2);
    const prec_t g = gain_and_bias(m, pi).gain;
    for (prec_t x : gain_vector(m, pi)) EXPECT_NEAR(x, g, 1e-9);
}

TEST(GainVector, MultichainWithTransientState) {
    // states 0 and 1 absorbing with rewards 1 and 3; state 2 splits 1/4, 3/4 and pays 10
    const TabularMDP m(3, 1, Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0.25, 0.75, 0}}),
                       Matrix::from_rows({{1}, {3}, {10}}));
    const auto g = gain_vector(m, Policy::uniform(3, 1));
    EXPECT_NEAR(g[0], 1.0, 1e-12);
    EXPECT_NEAR(g[1], 3.0, 1e-12);
    EXPECT_NEAR(g[2], 0.25 * 1 + 0.75 * 3, 1e-12);
}

TEST(GainVector, OneLoopSplitPolicy) {
    const auto ol = env::one_loop();
    const auto pi = Policy::deterministic({env::loop::left, env::loop::right}, 2);
    EXPECT_EQ(gain_vector(ol.nominal, pi), (numvec{0.0, 1.0}));
    EXPECT_NEAR(env::evaluate_under_perturbation(pi, ol.nominal), 0.0, 1e-12);
}
