#pragma once

#include "rarl/mdp.hpp"

#include <array>

namespace rarl::env {

struct GarnetParams {
    std::size_t n_states = 5;
    std::size_t n_actions = 3;
    std::uint64_t seed = 0;
    /// sigma(s,a) ~ Uniform[0, kernel_scale_max]
    prec_t kernel_scale_max = 100.0;
    /// mu(s,a) ~ Uniform[0, reward_scale_max]
    prec_t reward_scale_max = 100.0;
};

/**
 * Garnet MDP: each kernel entry ~ N(1, sigma(s,a)) clipped at zero and the
 * row normalized (redrawn if it clips to all zeros); r(s,a) ~ N(1, mu(s,a)).
 */
inline TabularMDP garnet(const GarnetParams& params) {
    if (params.n_states == 0 || params.n_actions == 0) throw std::invalid_argument("garnet sizes must be >= 1");
    const std::size_t ns = params.n_states, na = params.n_actions;
    Rng rng(params.seed);
    std::uniform_real_distribution<prec_t> kscale(0.0, params.kernel_scale_max);
    std::uniform_real_distribution<prec_t> rscale(0.0, params.reward_scale_max);
    Matrix kernel(ns * na, ns), reward(ns, na);
    for (index_t s = 0; s < ns; ++s)
        for (index_t a = 0; a < na; ++a) {
            const prec_t sigma = kscale(rng);
            std::normal_distribution<prec_t> entry(1.0, sigma);
            auto row = kernel.row(s * na + a);
            prec_t sum = 0;
            while (sum <= 0) {
                sum = 0;
                for (auto& x : row) {
                    x = std::max(0.0, entry(rng));
                    sum += x;
                }
            }
            for (auto& x : row) x /= sum;
            const prec_t mu = rscale(rng);
            reward(s, a) = std::normal_distribution<prec_t>(1.0, mu)(rng);
        }
    return {ns, na, std::move(kernel), std::move(reward)};
}

inline TabularMDP garnet(std::size_t n_states, std::size_t n_actions, std::uint64_t seed) {
    return garnet(GarnetParams{n_states, n_actions, seed});
}

/// Three-state single-action instance with a two-kernel uncertainty set
struct ExampleA {
    TabularMDP nominal; ///< kernel P1
    std::vector<Matrix> kernels; ///< {P1, P2}
    Policy policy;
};

/// P1 sends 1 -> 2, P2 sends 1 -> 3; states 2 and 3 swap deterministically
inline ExampleA example_a(prec_t r1, prec_t r2, prec_t r3) {
    const Matrix p1 = Matrix::from_rows({{0, 1, 0}, {0, 0, 1}, {0, 1, 0}});
    const Matrix p2 = Matrix::from_rows({{0, 0, 1}, {0, 0, 1}, {0, 1, 0}});
    Matrix reward = Matrix::from_rows({{r1}, {r2}, {r3}});
    TabularMDP nominal(3, 1, p1, std::move(reward));
    return {std::move(nominal), {p1, p2}, Policy::uniform(3, 1)};
}

struct RecyclingParams {
    prec_t alpha = 0.5;
    prec_t beta = 0.5;
    prec_t r_search = 2.0;
    prec_t r_wait = 1.0;
    prec_t rescue_penalty = -3.0;
};

namespace robot {
constexpr index_t low = 0, high = 1;
constexpr index_t search = 0, wait = 1, recharge = 2;
} // namespace robot

/**
 * Recycling robot: states {low, high}, actions {search, wait, recharge}.
 * Searching at high keeps the level w.p. beta (else drops to low); searching
 * at low keeps it w.p. alpha, otherwise the battery dies and the robot is
 * carried back to high with the rescue penalty. Rewards are expectations
 * over the outcome.
 */
inline TabularMDP recycling_robot(const RecyclingParams& p) {
    using namespace robot;
    Matrix k(2 * 3, 2, 0.0), r(2, 3, 0.0);
    auto set = [&](index_t s, index_t a, prec_t to_low, prec_t to_high) {
        k(s * 3 + a, low) = to_low;
        k(s * 3 + a, high) = to_high;
    };
    set(high, search, 1.0 - p.beta, p.beta);
    r(high, search) = p.r_search;
    set(low, search, p.alpha, 1.0 - p.alpha);
    r(low, search) = p.alpha * p.r_search + (1.0 - p.alpha) * p.rescue_penalty;
    set(high, wait, 0.0, 1.0);
    set(low, wait, 1.0, 0.0);
    r(high, wait) = r(low, wait) = p.r_wait;
    set(high, recharge, 0.0, 1.0);
    set(low, recharge, 0.0, 1.0);
    return {2, 3, std::move(k), std::move(r)};
}

struct InventoryParams {
    std::size_t capacity = 16;
    std::size_t max_order = 8;
    /// demand distribution over {0, ..., demand.size()-1}; empty = Uniform(0, capacity)
    numvec demand;
    prec_t penalty = -15.0;
    prec_t hold_rate = 3.0;
    prec_t price = 5.0;
    prec_t order_rate = 1.0;
};

/**
 * Inventory control. s' = min(max(s + a - D, 0), capacity); reward
 * -order_rate a - hold_rate (s + a) + (price D if D <= s + a else penalty),
 * averaged over the demand.
 */
inline TabularMDP inventory(const InventoryParams& p) {
    const std::size_t ns = p.capacity + 1, na = p.max_order + 1;
    numvec demand = p.demand.empty() ? numvec(ns, 1.0 / prec_t(ns)) : p.demand;
    if (!is_simplex(demand)) throw std::invalid_argument("demand must be a probability vector");
    Matrix k(ns * na, ns, 0.0), r(ns, na, 0.0);
    for (index_t s = 0; s < ns; ++s)
        for (index_t a = 0; a < na; ++a) {
            const long stock = long(s + a);
            prec_t expected = -p.order_rate * prec_t(a) - p.hold_rate * prec_t(stock);
            for (std::size_t d = 0; d < demand.size(); ++d) {
                if (demand[d] == 0) continue;
                const long next = std::min(std::max(stock - long(d), 0L), long(p.capacity));
                k(s * na + a, std::size_t(next)) += demand[d];
                expected += demand[d] * (long(d) <= stock ? p.price * prec_t(d) : p.penalty);
            }
            r(s, a) = expected;
        }
    return {ns, na, std::move(k), std::move(r)};
}

/**
 * U_{(m,b)}: 1/n + b (n - 2) / (2n) on {m, m+1}, (1 - b)/n elsewhere, over n
 * outcomes.
 */
inline numvec inventory_perturbed_demand(std::size_t m, prec_t b, std::size_t n = 17) {
    if (m + 1 >= n) throw std::invalid_argument("m + 1 must be a valid demand value");
    if (b < 0 || b > 1) throw std::invalid_argument("b must lie in [0,1]");
    const prec_t nn = prec_t(n);
    numvec u(n, (1.0 - b) / nn);
    u[m] = u[m + 1] = 1.0 / nn + b * (nn - 2.0) / (2.0 * nn);
    return u;
}

namespace loop {
constexpr index_t s1 = 0, s2 = 1;
constexpr index_t left = 0, right = 1;
} // namespace loop

struct OneLoop {
    TabularMDP nominal;
    TabularMDP perturbed;
};

/**
 * One-loop task. Nominal: s1 -a_l-> s1 (0), s1 -a_r-> s2 (-2),
 * s2 -a_l-> s1 (0), s2 -a_r-> s2 (+1). Perturbed: s2 -a_r-> s1 (+1).
 */
inline OneLoop one_loop() {
    using namespace loop;
    Matrix r = Matrix::from_rows({{0.0, -2.0}, {0.0, 1.0}});
    Matrix k = Matrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
    Matrix kp = Matrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {1, 0}});
    return {TabularMDP(2, 2, std::move(k), r), TabularMDP(2, 2, std::move(kp), r)};
}

/// Kernel interpolating the one-loop nominal (t = 0) and perturbed (t = 1) dynamics
inline TabularMDP one_loop_mixture(prec_t t) {
    const auto ol = one_loop();
    Matrix k = ol.nominal.kernel();
    for (std::size_t i = 0; i < k.rows(); ++i)
        for (std::size_t j = 0; j < k.cols(); ++j)
            k(i, j) = (1.0 - t) * ol.nominal.kernel()(i, j) + t * ol.perturbed.kernel()(i, j);
    return ol.nominal.with_kernel(std::move(k));
}

/**
 * 4x4 Frozen Lake as a continuing task.
 *
 * Map (row-major, state = 4 row + col):
 *   S F F F
 *   F H F H
 *   F F F H
 *   H F F G
 * Actions: 0 left, 1 down, 2 right, 3 up. The intended move happens with
 * probability 1 - slip and each perpendicular move with probability slip / 2
 * (the default 2/3 gives the usual one-third split); moves off the grid stay
 * put. From a hole or the goal every action returns to the start; leaving
 * the goal pays reward 1, everything else pays 0.
 */
inline TabularMDP frozen_lake_4x4(prec_t slip = 2.0 / 3.0) {
    if (slip < 0 || slip > 1) throw std::invalid_argument("slip probability must lie in [0,1]");
    static constexpr std::array<char, 16> map = {'S', 'F', 'F', 'F', 'F', 'H', 'F', 'H',
                                                 'F', 'F', 'F', 'H', 'H', 'F', 'F', 'G'};
    constexpr int drow[4] = {0, 1, 0, -1};
    constexpr int dcol[4] = {-1, 0, 1, 0};
    Matrix k(16 * 4, 16, 0.0), r(16, 4, 0.0);
    auto move = [&](index_t s, int dir) -> index_t {
        const int row = int(s) / 4 + drow[dir], col = int(s) % 4 + dcol[dir];
        if (row < 0 || row > 3 || col < 0 || col > 3) return s;
        return index_t(row * 4 + col);
    };
    for (index_t s = 0; s < 16; ++s)
        for (index_t a = 0; a < 4; ++a) {
            auto row = k.row(s * 4 + a);
            if (map[s] == 'H' || map[s] == 'G') {
                row[0] = 1.0;
                r(s, a) = map[s] == 'G' ? 1.0 : 0.0;
                continue;
            }
            row[move(s, int(a))] += 1.0 - slip;
            row[move(s, int((a + 1) % 4))] += slip / 2.0;
            row[move(s, int((a + 3) % 4))] += slip / 2.0;
        }
    return {16, 4, std::move(k), std::move(r)};
}

/**
 * Exact gain of a policy under a (perturbed) MDP. If the induced chain is
 * multichain the gain depends on the start state and the smallest one is
 * returned.
 */
inline prec_t evaluate_under_perturbation(const Policy& pi, const TabularMDP& perturbed) {
    if (is_unichain(induced_chain(perturbed, pi).transition)) return gain_and_bias(perturbed, pi).gain;
    const numvec g = gain_vector(perturbed, pi);
    return *std::min_element(g.begin(), g.end());
}

/// Worst gain over a list of perturbed MDPs
inline prec_t worst_gain(const Policy& pi, const std::vector<TabularMDP>& perturbed) {
    if (perturbed.empty()) throw std::invalid_argument("empty perturbation list");
    prec_t g = std::numeric_limits<prec_t>::infinity();
    for (const auto& m : perturbed) g = std::min(g, evaluate_under_perturbation(pi, m));
    return g;
}

} // namespace rarl::env
