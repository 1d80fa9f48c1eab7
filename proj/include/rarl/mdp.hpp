#pragma once

#include "rarl/types.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>
#include <variant>

namespace rarl {

/// Dense row-major matrix
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, prec_t fill = 0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    prec_t& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    prec_t operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<prec_t> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const prec_t> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    const numvec& data() const noexcept { return data_; }

    static Matrix from_rows(const std::vector<numvec>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) throw std::invalid_argument("ragged matrix rows");
            std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
        }
        return m;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    numvec data_;
};

/**
 * Finite MDP with a nominal transition kernel and a reward per (s,a).
 *
 * The constructor only checks shapes. Whether the kernel rows are valid
 * probability distributions is reported by validate().
 */
class TabularMDP {
public:
    TabularMDP() = default;

    /// kernel rows are indexed by s * n_actions + a
    TabularMDP(std::size_t n_states, std::size_t n_actions, Matrix kernel, Matrix reward)
        : n_states_(n_states), n_actions_(n_actions), kernel_(std::move(kernel)),
          reward_(std::move(reward)) {
        if (n_states == 0 || n_actions == 0)
            throw std::invalid_argument("TabularMDP needs at least one state and one action");
        if (kernel_.rows() != n_states * n_actions || kernel_.cols() != n_states)
            throw std::invalid_argument("kernel must have n_states*n_actions rows of length n_states");
        if (reward_.rows() != n_states || reward_.cols() != n_actions)
            throw std::invalid_argument("reward must be n_states x n_actions");
    }

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }

    std::span<const prec_t> row(index_t s, index_t a) const {
        return kernel_.row(s * n_actions_ + a);
    }
    std::span<prec_t> row(index_t s, index_t a) { return kernel_.row(s * n_actions_ + a); }

    prec_t reward(index_t s, index_t a) const { return reward_(s, a); }
    prec_t& reward(index_t s, index_t a) { return reward_(s, a); }

    const Matrix& kernel() const noexcept { return kernel_; }
    const Matrix& rewards() const noexcept { return reward_; }

    /// Same rewards, different kernel
    TabularMDP with_kernel(Matrix kernel) const {
        return {n_states_, n_actions_, std::move(kernel), reward_};
    }

    bool operator==(const TabularMDP&) const = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    Matrix kernel_;
    Matrix reward_;
};

/// Stationary randomized policy: one probability row over actions per state
class Policy {
public:
    Policy() = default;
    explicit Policy(Matrix probs) : probs_(std::move(probs)) {}

    static Policy uniform(std::size_t n_states, std::size_t n_actions) {
        return Policy(Matrix(n_states, n_actions, 1.0 / prec_t(n_actions)));
    }

    static Policy deterministic(const std::vector<index_t>& actions, std::size_t n_actions) {
        Matrix m(actions.size(), n_actions, 0.0);
        for (std::size_t s = 0; s < actions.size(); ++s) {
            if (actions[s] >= n_actions) throw std::invalid_argument("action index out of range");
            m(s, actions[s]) = 1.0;
        }
        return Policy(std::move(m));
    }

    std::size_t n_states() const noexcept { return probs_.rows(); }
    std::size_t n_actions() const noexcept { return probs_.cols(); }
    prec_t operator()(index_t s, index_t a) const { return probs_(s, a); }
    std::span<const prec_t> row(index_t s) const { return probs_.row(s); }
    const Matrix& probs() const noexcept { return probs_; }

    /// Action with the largest probability in each state (lowest index on ties)
    std::vector<index_t> actions() const {
        std::vector<index_t> out(n_states());
        for (index_t s = 0; s < n_states(); ++s) {
            auto r = row(s);
            out[s] = std::size_t(std::max_element(r.begin(), r.end()) - r.begin());
        }
        return out;
    }

    bool operator==(const Policy&) const = default;

private:
    Matrix probs_;
};

/// Action-value function over S x A
class QFn {
public:
    QFn() = default;
    QFn(std::size_t n_states, std::size_t n_actions, prec_t fill = 0)
        : n_states_(n_states), n_actions_(n_actions), q_(n_states * n_actions, fill) {}

    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }

    prec_t& operator()(index_t s, index_t a) { return q_[s * n_actions_ + a]; }
    prec_t operator()(index_t s, index_t a) const { return q_[s * n_actions_ + a]; }

    /// Flattened (s,a) entries, s-major
    std::span<const prec_t> flat() const noexcept { return q_; }
    std::span<prec_t> flat() noexcept { return q_; }

    /// V_Q(s) = max_a Q(s,a)
    ValueFn values() const {
        ValueFn v(n_states_);
        for (index_t s = 0; s < n_states_; ++s) {
            prec_t m = (*this)(s, 0);
            for (index_t a = 1; a < n_actions_; ++a) m = std::max(m, (*this)(s, a));
            v[s] = m;
        }
        return v;
    }

    bool operator==(const QFn&) const = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    numvec q_;
};

/**
 * Offset functional used by relative value iteration.
 *
 * All variants are linear functionals f(x) = w.x with the weights summing to
 * one, so f(e) = 1, f(x + c e) = f(x) + c and f(c x) = c f(x) hold exactly.
 * For Q functions the functional is applied to the flattened s-major vector.
 */
class OffsetFn {
public:
    struct ReferenceState {
        index_t index;
    };
    struct Mean {};
    /// Arbitrary probability weights; used for the stationary (bias) normalization
    struct Weighted {
        numvec weights;
    };

    OffsetFn() : variant_(Mean{}) {}
    static OffsetFn reference(index_t s0) { return OffsetFn(ReferenceState{s0}); }
    static OffsetFn mean() { return OffsetFn(Mean{}); }
    static OffsetFn weighted(numvec w) {
        prec_t sum = 0;
        for (prec_t x : w) {
            if (x < 0) throw std::invalid_argument("offset weights must be nonnegative");
            sum += x;
        }
        if (std::abs(sum - 1.0) > SIMPLEX_TOL) throw std::invalid_argument("offset weights must sum to 1");
        return OffsetFn(Weighted{std::move(w)});
    }

    prec_t operator()(std::span<const prec_t> x) const {
        return std::visit(
            [&](const auto& v) -> prec_t {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, ReferenceState>) {
                    if (v.index >= x.size()) throw std::out_of_range("reference state out of range");
                    return x[v.index];
                } else if constexpr (std::is_same_v<T, Mean>) {
                    prec_t s = 0;
                    for (prec_t xi : x) s += xi;
                    return s / prec_t(x.size());
                } else {
                    if (v.weights.size() != x.size()) throw std::invalid_argument("offset weight size mismatch");
                    return dot(v.weights, x);
                }
            },
            variant_);
    }

    /// Weight vector w with f(x) = w.x for vectors of length n
    numvec weights(std::size_t n) const {
        return std::visit(
            [&](const auto& v) -> numvec {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, ReferenceState>) {
                    if (v.index >= n) throw std::out_of_range("reference state out of range");
                    numvec w(n, 0.0);
                    w[v.index] = 1.0;
                    return w;
                } else if constexpr (std::is_same_v<T, Mean>) {
                    return numvec(n, 1.0 / prec_t(n));
                } else {
                    if (v.weights.size() != n) throw std::invalid_argument("offset weight size mismatch");
                    return v.weights;
                }
            },
            variant_);
    }

    /// Lipschitz constant w.r.t. the sup norm; 1 for every variant
    static constexpr prec_t lipschitz() { return 1.0; }

    const auto& variant() const noexcept { return variant_; }

private:
    template <class T>
    explicit OffsetFn(T v) : variant_(std::move(v)) {}
    std::variant<ReferenceState, Mean, Weighted> variant_;
};

/// Gain g and bias (relative value) V of a policy under a kernel
struct GainBias {
    prec_t gain = 0;
    ValueFn bias;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// First violated invariant found by validate()
struct Violation {
    std::string message;
    index_t state = 0;
    index_t action = 0;
};

namespace detail {
inline std::optional<std::string> check_simplex_row(std::span<const prec_t> row) {
    prec_t sum = 0;
    for (prec_t x : row) {
        if (!std::isfinite(x)) return "non-finite entry";
        if (x < 0) return "negative entry";
        sum += x;
    }
    if (std::abs(sum - 1.0) > SIMPLEX_TOL) {
        std::ostringstream os;
        os << "row sum " << sum;
        return os.str();
    }
    return std::nullopt;
}
} // namespace detail

/// Is x a probability vector within SIMPLEX_TOL?
inline bool is_simplex(std::span<const prec_t> x) {
    return !x.empty() && !detail::check_simplex_row(x).has_value();
}

/// Returns the first violated invariant, or nullopt when the MDP is valid
inline std::optional<Violation> validate(const TabularMDP& mdp) {
    for (index_t s = 0; s < mdp.n_states(); ++s)
        for (index_t a = 0; a < mdp.n_actions(); ++a) {
            if (auto err = detail::check_simplex_row(mdp.row(s, a))) {
                std::ostringstream os;
                os << *err << " at (s=" << s << ",a=" << a << ")";
                return Violation{os.str(), s, a};
            }
            if (!std::isfinite(mdp.reward(s, a))) {
                std::ostringstream os;
                os << "non-finite reward at (s=" << s << ",a=" << a << ")";
                return Violation{os.str(), s, a};
            }
        }
    return std::nullopt;
}

inline std::optional<Violation> validate(const Policy& pi) {
    for (index_t s = 0; s < pi.n_states(); ++s)
        if (auto err = detail::check_simplex_row(pi.row(s))) {
            std::ostringstream os;
            os << *err << " in policy row s=" << s;
            return Violation{os.str(), s, 0};
        }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Markov chain machinery
// ---------------------------------------------------------------------------

/// State chain induced by a policy
struct InducedChain {
    Matrix transition; ///< P^pi
    numvec reward;     ///< r_pi
};

inline void check_dims(const TabularMDP& mdp, const Policy& pi) {
    if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions())
        throw std::invalid_argument("policy and MDP dimensions disagree");
}

/// P^pi(s,.) = sum_a pi(a|s) P(s,a,.), r_pi(s) = sum_a pi(a|s) r(s,a)
inline InducedChain induced_chain(const TabularMDP& mdp, const Policy& pi) {
    check_dims(mdp, pi);
    const std::size_t n = mdp.n_states();
    InducedChain out{Matrix(n, n, 0.0), numvec(n, 0.0)};
    for (index_t s = 0; s < n; ++s)
        for (index_t a = 0; a < mdp.n_actions(); ++a) {
            const prec_t w = pi(s, a);
            if (w == 0) continue;
            auto row = mdp.row(s, a);
            for (index_t t = 0; t < n; ++t) out.transition(s, t) += w * row[t];
            out.reward[s] += w * mdp.reward(s, a);
        }
    return out;
}

/**
 * Recurrent classes of a stochastic matrix: the closed strongly connected
 * components of the support graph (entries above SUPPORT_EPS).
 */
inline std::vector<std::vector<index_t>> recurrent_classes(const Matrix& P) {
    const std::size_t n = P.rows();
    // iterative Tarjan
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<index_t> stack;
    std::vector<std::vector<index_t>> components;
    int counter = 0;

    struct Frame {
        index_t v;
        index_t next;
    };
    for (index_t root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            if (f.next < n) {
                index_t w = f.next++;
                if (P(f.v, w) <= SUPPORT_EPS) continue;
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
            } else {
                index_t v = f.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
                if (low[v] == index[v]) {
                    std::vector<index_t> c;
                    index_t w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        comp[w] = int(components.size());
                        c.push_back(w);
                    } while (w != v);
                    std::sort(c.begin(), c.end());
                    components.push_back(std::move(c));
                }
            }
        }
    }

    std::vector<std::vector<index_t>> closed;
    for (std::size_t c = 0; c < components.size(); ++c) {
        bool is_closed = true;
        for (index_t v : components[c]) {
            for (index_t w = 0; w < n && is_closed; ++w)
                if (P(v, w) > SUPPORT_EPS && comp[w] != int(c)) is_closed = false;
            if (!is_closed) break;
        }
        if (is_closed) closed.push_back(components[c]);
    }
    return closed;
}

/// True iff the chain has exactly one recurrent class
inline bool is_unichain(const Matrix& P) { return recurrent_classes(P).size() == 1; }

/**
 * Stationary distribution of a unichain by power iteration on the lazy chain
 * (I + P)/2, which has the same stationary distribution and is aperiodic.
 */
inline numvec stationary_distribution(const Matrix& P, prec_t tol = 1e-12,
                                      std::size_t max_iters = 1'000'000) {
    const std::size_t n = P.rows();
    if (n == 0 || P.cols() != n) throw std::invalid_argument("transition matrix must be square");
    numvec mu(n, 1.0 / prec_t(n)), next(n);
    prec_t change = std::numeric_limits<prec_t>::infinity();
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (index_t i = 0; i < n; ++i) {
            if (mu[i] == 0) continue;
            auto row = P.row(i);
            for (index_t j = 0; j < n; ++j) next[j] += mu[i] * row[j];
        }
        change = 0;
        prec_t sum = 0;
        for (index_t j = 0; j < n; ++j) {
            next[j] = 0.5 * (mu[j] + next[j]);
            change += std::abs(next[j] - mu[j]);
            sum += next[j];
        }
        for (index_t j = 0; j < n; ++j) mu[j] = next[j] / sum;
        if (change < tol) return mu;
    }
    throw convergence_error("stationary distribution did not converge", change);
}

/**
 * Gain and bias of a unichain policy.
 *
 * Solves V = r_pi - g e + P^pi V together with the normalization f(V) = 0 as
 * one dense (|S|+1)-dimensional linear system.
 */
inline GainBias gain_and_bias(const TabularMDP& mdp, const Policy& pi,
                              const OffsetFn& normalization = OffsetFn::mean()) {
    const auto chain = induced_chain(mdp, pi);
    if (!is_unichain(chain.transition))
        throw multichain_error("induced chain has more than one recurrent class");

    const std::size_t n = mdp.n_states();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Eigen::Index(n + 1), Eigen::Index(n + 1));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(Eigen::Index(n + 1));
    for (index_t s = 0; s < n; ++s) {
        for (index_t t = 0; t < n; ++t) A(Eigen::Index(s), Eigen::Index(t)) = -chain.transition(s, t);
        A(Eigen::Index(s), Eigen::Index(s)) += 1.0;
        A(Eigen::Index(s), Eigen::Index(n)) = 1.0;
        b(Eigen::Index(s)) = chain.reward[s];
    }
    const numvec w = normalization.weights(n);
    for (index_t t = 0; t < n; ++t) A(Eigen::Index(n), Eigen::Index(t)) = w[t];

    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < Eigen::Index(n + 1)) throw std::runtime_error("singular gain/bias system");
    Eigen::VectorXd x = lu.solve(b);

    GainBias out;
    out.gain = x(Eigen::Index(n));
    out.bias.assign(x.data(), x.data() + n);
    return out;
}

/**
 * Per-state gain of an arbitrary (possibly multichain) policy: each recurrent
 * class earns its stationary average reward, and transient states the
 * absorption-weighted average of the class gains.
 */
inline numvec gain_vector(const TabularMDP& mdp, const Policy& pi) {
    const auto chain = induced_chain(mdp, pi);
    const std::size_t n = mdp.n_states();
    numvec g(n, 0.0);
    std::vector<bool> recurrent(n, false);
    for (const auto& cls : recurrent_classes(chain.transition)) {
        Matrix sub(cls.size(), cls.size(), 0.0);
        for (std::size_t i = 0; i < cls.size(); ++i)
            for (std::size_t j = 0; j < cls.size(); ++j) sub(i, j) = chain.transition(cls[i], cls[j]);
        const numvec mu = stationary_distribution(sub);
        prec_t gc = 0;
        for (std::size_t i = 0; i < cls.size(); ++i) gc += mu[i] * chain.reward[cls[i]];
        for (index_t s : cls) {
            g[s] = gc;
            recurrent[s] = true;
        }
    }
    std::vector<index_t> transient;
    for (index_t s = 0; s < n; ++s)
        if (!recurrent[s]) transient.push_back(s);
    if (transient.empty()) return g;
    const auto m = Eigen::Index(transient.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const index_t s = transient[std::size_t(i)];
        for (Eigen::Index j = 0; j < m; ++j) A(i, j) -= chain.transition(s, transient[std::size_t(j)]);
        for (index_t t = 0; t < n; ++t)
            if (recurrent[t]) b(i) += chain.transition(s, t) * g[t];
    }
    const Eigen::VectorXd x = A.fullPivLu().solve(b);
    for (Eigen::Index i = 0; i < m; ++i) g[transient[std::size_t(i)]] = x(i);
    return g;
}

/// Same as gain_and_bias, with the bias normalized to mu.V = 0 (mu stationary)
inline GainBias gain_and_stationary_bias(const TabularMDP& mdp, const Policy& pi) {
    const auto chain = induced_chain(mdp, pi);
    return gain_and_bias(mdp, pi, OffsetFn::weighted(stationary_distribution(chain.transition)));
}

/// max_s |r_pi - g e + P^pi V - V|
inline prec_t bellman_error(const TabularMDP& mdp, const Policy& pi, const GainBias& gb) {
    const auto chain = induced_chain(mdp, pi);
    prec_t err = 0;
    for (index_t s = 0; s < mdp.n_states(); ++s) {
        prec_t rhs = chain.reward[s] - gb.gain + dot(chain.transition.row(s), gb.bias);
        err = std::max(err, std::abs(rhs - gb.bias[s]));
    }
    return err;
}

/**
 * Residual of the robust Bellman equation
 *   V(s) = sum_a pi(a|s) (r(s,a) - g + sigma_{s,a}(V)).
 * `support(s, a, v)` evaluates the support function of row (s,a).
 */
template <class SupportFn>
numvec robust_bellman_residual(const TabularMDP& mdp, const Policy& pi, SupportFn&& support,
                               prec_t g, std::span<const prec_t> v) {
    check_dims(mdp, pi);
    if (v.size() != mdp.n_states()) throw std::invalid_argument("value function size mismatch");
    numvec res(mdp.n_states());
    for (index_t s = 0; s < mdp.n_states(); ++s) {
        prec_t rhs = 0;
        for (index_t a = 0; a < mdp.n_actions(); ++a) {
            const prec_t w = pi(s, a);
            if (w == 0) continue;
            rhs += w * (mdp.reward(s, a) - g + support(s, a, v));
        }
        res[s] = rhs - v[s];
    }
    return res;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TabularMDP& mdp) {
    nlohmann::json kernel = nlohmann::json::array();
    for (std::size_t i = 0; i < mdp.kernel().rows(); ++i) {
        auto r = mdp.kernel().row(i);
        kernel.push_back(numvec(r.begin(), r.end()));
    }
    nlohmann::json reward = nlohmann::json::array();
    for (index_t s = 0; s < mdp.n_states(); ++s) {
        auto r = mdp.rewards().row(s);
        reward.push_back(numvec(r.begin(), r.end()));
    }
    return {{"n_states", mdp.n_states()},
            {"n_actions", mdp.n_actions()},
            {"kernel", kernel},
            {"reward", reward}};
}

inline TabularMDP mdp_from_json(const nlohmann::json& j) {
    const auto n_states = j.at("n_states").get<std::size_t>();
    const auto n_actions = j.at("n_actions").get<std::size_t>();
    auto kernel = Matrix::from_rows(j.at("kernel").get<std::vector<numvec>>());
    auto reward = Matrix::from_rows(j.at("reward").get<std::vector<numvec>>());
    return {n_states, n_actions, std::move(kernel), std::move(reward)};
}

} // namespace rarl
