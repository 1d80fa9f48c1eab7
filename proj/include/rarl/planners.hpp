#pragma once

#include "rarl/learners.hpp"
#include "rarl/mdp.hpp"
#include "rarl/uncertainty.hpp"

#include <concepts>

namespace rarl {

/**
 * A robust MDP as seen by the planners: rewards plus, for every (s,a), the
 * support function of its uncertainty set and one minimizing row.
 */
template <class M>
concept RobustModel = requires(const M& m, index_t s, index_t a, std::span<const prec_t> v) {
    { m.n_states() } -> std::convertible_to<std::size_t>;
    { m.n_actions() } -> std::convertible_to<std::size_t>;
    { m.reward(s, a) } -> std::convertible_to<prec_t>;
    { m.support(s, a, v) } -> std::convertible_to<prec_t>;
    { m.worst_row(s, a, v) } -> std::convertible_to<numvec>;
};

/// Nominal MDP with one parametric ball per (s,a)
class ParametricModel {
public:
    ParametricModel(const TabularMDP& mdp, UncertaintySetSpec spec) : mdp_(&mdp), spec_(std::move(spec)) {}
    std::size_t n_states() const { return mdp_->n_states(); }
    std::size_t n_actions() const { return mdp_->n_actions(); }
    prec_t reward(index_t s, index_t a) const { return mdp_->reward(s, a); }
    prec_t support(index_t s, index_t a, std::span<const prec_t> v) const {
        return support_value(spec_, mdp_->row(s, a), v);
    }
    numvec worst_row(index_t s, index_t a, std::span<const prec_t> v) const {
        return worst_case_row(spec_, mdp_->row(s, a), v);
    }
    const TabularMDP& mdp() const { return *mdp_; }

private:
    const TabularMDP* mdp_;
    UncertaintySetSpec spec_;
};

/**
 * (s,a)-rectangular set built from a finite list of kernels: the candidates
 * for row (s,a) are the (s,a) rows of every listed kernel.
 */
class FiniteSetModel {
public:
    FiniteSetModel(const TabularMDP& nominal, std::vector<Matrix> kernels)
        : mdp_(&nominal), kernels_(std::move(kernels)) {
        if (kernels_.empty()) throw std::invalid_argument("finite uncertainty set needs at least one kernel");
        for (const auto& k : kernels_)
            if (k.rows() != nominal.kernel().rows() || k.cols() != nominal.kernel().cols())
                throw std::invalid_argument("kernel shape mismatch");
    }
    std::size_t n_states() const { return mdp_->n_states(); }
    std::size_t n_actions() const { return mdp_->n_actions(); }
    prec_t reward(index_t s, index_t a) const { return mdp_->reward(s, a); }
    prec_t support(index_t s, index_t a, std::span<const prec_t> v) const {
        prec_t best = std::numeric_limits<prec_t>::infinity();
        for (const auto& k : kernels_) best = std::min(best, dot(k.row(s * n_actions() + a), v));
        return best;
    }
    numvec worst_row(index_t s, index_t a, std::span<const prec_t> v) const {
        const Matrix* arg = &kernels_.front();
        prec_t best = std::numeric_limits<prec_t>::infinity();
        for (const auto& k : kernels_) {
            const prec_t val = dot(k.row(s * n_actions() + a), v);
            if (val < best) {
                best = val;
                arg = &k;
            }
        }
        auto r = arg->row(s * n_actions() + a);
        return {r.begin(), r.end()};
    }
    const std::vector<Matrix>& kernels() const { return kernels_; }

private:
    const TabularMDP* mdp_;
    std::vector<Matrix> kernels_;
};

static_assert(RobustModel<ParametricModel>);
static_assert(RobustModel<FiniteSetModel>);

/// Robust Bellman residual for any RobustModel
template <RobustModel M>
numvec robust_bellman_residual(const M& model, const Policy& pi, prec_t g, std::span<const prec_t> v) {
    numvec res(model.n_states());
    for (index_t s = 0; s < model.n_states(); ++s) {
        prec_t rhs = 0;
        for (index_t a = 0; a < model.n_actions(); ++a) {
            const prec_t w = pi(s, a);
            if (w == 0) continue;
            rhs += w * (model.reward(s, a) - g + model.support(s, a, v));
        }
        res[s] = rhs - v[s];
    }
    return res;
}

/// Residual of Q(s,a) = r(s,a) - g + sigma_{s,a}(V_Q), flattened s-major
template <RobustModel M>
numvec robust_q_residual(const M& model, prec_t g, const QFn& q) {
    const ValueFn v = q.values();
    numvec res(model.n_states() * model.n_actions());
    for (index_t s = 0; s < model.n_states(); ++s)
        for (index_t a = 0; a < model.n_actions(); ++a)
            res[s * model.n_actions() + a] = model.reward(s, a) - g + model.support(s, a, v) - q(s, a);
    return res;
}

/// The kernel P_V assembling a worst-case row for every (s,a)
template <RobustModel M>
Matrix worst_case_kernel(const M& model, std::span<const prec_t> v) {
    Matrix k(model.n_states() * model.n_actions(), model.n_states());
    for (index_t s = 0; s < model.n_states(); ++s)
        for (index_t a = 0; a < model.n_actions(); ++a) {
            const numvec row = model.worst_row(s, a, v);
            std::copy(row.begin(), row.end(), k.row(s * model.n_actions() + a).begin());
        }
    return k;
}

struct PlannerOptions {
    prec_t tol = 1e-9;
    std::size_t max_iters = 1'000'000;
    /// Aperiodicity transform: each sweep uses (1 - damping) V + damping T V.
    /// 1 gives plain relative value iteration, which can cycle on periodic chains.
    prec_t damping = 0.5;
};

struct EvalResult {
    prec_t gain = 0;
    ValueFn v;
    std::size_t iterations = 0;
    prec_t residual = 0;
};

struct ControlResult {
    prec_t gain = 0;
    QFn q;
    Policy policy;
    std::size_t iterations = 0;
    prec_t residual = 0;
};

/**
 * Model-based robust relative value iteration for a fixed policy.
 *
 * W = (1 - b) V_k + b T V_k, V_{k+1} = W - f(W) e, stopping once
 * Span(V_{k+1} - V_k) < tol; g = (f(W) - f(V_k)) / b.
 */
template <RobustModel M>
EvalResult robust_rvi_eval(const M& model, const Policy& pi, const OffsetFn& offset, const PlannerOptions& opts = {}) {
    const std::size_t n = model.n_states();
    if (pi.n_states() != n || pi.n_actions() != model.n_actions())
        throw std::invalid_argument("policy and model dimensions disagree");
    const prec_t b = opts.damping;
    if (!(b > 0) || b > 1) throw std::invalid_argument("damping must lie in (0,1]");

    ValueFn v(n, 0.0), w(n), diff(n);
    prec_t gain = 0, change = std::numeric_limits<prec_t>::infinity();
    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        for (index_t s = 0; s < n; ++s) {
            prec_t tv = 0;
            for (index_t a = 0; a < model.n_actions(); ++a) {
                const prec_t p = pi(s, a);
                if (p == 0) continue;
                tv += p * (model.reward(s, a) + model.support(s, a, v));
            }
            w[s] = (1.0 - b) * v[s] + b * tv;
        }
        const prec_t fw = offset(w);
        gain = (fw - offset(v)) / b;
        for (index_t s = 0; s < n; ++s) {
            const prec_t next = w[s] - fw;
            diff[s] = next - v[s];
            v[s] = next;
        }
        change = span(diff);
        if (!all_finite(v)) throw convergence_error("robust RVI diverged", change);
        if (change < opts.tol) {
            const auto res = robust_bellman_residual(model, pi, gain, v);
            return {gain, v, it, norm_inf(res)};
        }
    }
    throw convergence_error("robust RVI evaluation hit max_iters", change);
}

/// Convenience overload for a nominal MDP and a parametric set
inline EvalResult robust_rvi_eval(const TabularMDP& mdp, const Policy& pi, const UncertaintySetSpec& spec,
                                  const OffsetFn& offset, const PlannerOptions& opts = {}) {
    return robust_rvi_eval(ParametricModel(mdp, spec), pi, offset, opts);
}

/**
 * Model-based robust relative value iteration on Q:
 *   W = (1 - b) Q_k + b (r + sigma(V_{Q_k})), Q_{k+1} = W - f(W) e,
 * with greedy policy extraction at convergence.
 */
template <RobustModel M>
ControlResult robust_rvi_control(const M& model, const OffsetFn& offset, const PlannerOptions& opts = {}) {
    const std::size_t ns = model.n_states(), na = model.n_actions();
    const prec_t b = opts.damping;
    if (!(b > 0) || b > 1) throw std::invalid_argument("damping must lie in (0,1]");

    QFn q(ns, na);
    numvec w(ns * na), diff(ns * na);
    prec_t gain = 0, change = std::numeric_limits<prec_t>::infinity();
    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        const ValueFn v = q.values();
        for (index_t s = 0; s < ns; ++s)
            for (index_t a = 0; a < na; ++a)
                w[s * na + a] = (1.0 - b) * q(s, a) + b * (model.reward(s, a) + model.support(s, a, v));
        const prec_t fw = offset(w);
        gain = (fw - offset(q.flat())) / b;
        auto flat = q.flat();
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const prec_t next = w[i] - fw;
            diff[i] = next - flat[i];
            flat[i] = next;
        }
        change = span(diff);
        if (!all_finite(flat)) throw convergence_error("robust RVI control diverged", change);
        if (change < opts.tol) {
            const auto res = robust_q_residual(model, gain, q);
            Policy pi = greedy_policy(q);
            return {gain, std::move(q), std::move(pi), it, norm_inf(res)};
        }
    }
    throw convergence_error("robust RVI control hit max_iters", change);
}

inline ControlResult robust_rvi_control(const TabularMDP& mdp, const UncertaintySetSpec& spec, const OffsetFn& offset,
                                        const PlannerOptions& opts = {}) {
    return robust_rvi_control(ParametricModel(mdp, spec), offset, opts);
}

struct EnumerationResult {
    prec_t gain = 0;
    /// indices of the kernels attaining the minimum gain
    std::vector<std::size_t> minimizers;
    /// gain and stationary-normalized bias under each kernel
    std::vector<GainBias> per_kernel;
};

/**
 * Worst-case gain over an explicit list of kernels, evaluated exactly with
 * gain_and_bias (bias normalized by the stationary distribution).
 */
inline EnumerationResult finite_set_enumeration(const TabularMDP& nominal, const std::vector<Matrix>& kernels,
                                                const Policy& pi, prec_t tie_tol = 1e-9) {
    if (kernels.empty()) throw std::invalid_argument("empty kernel list");
    EnumerationResult out;
    out.gain = std::numeric_limits<prec_t>::infinity();
    for (const auto& k : kernels) {
        const TabularMDP m = nominal.with_kernel(k);
        if (auto v = validate(m)) throw std::invalid_argument("invalid kernel: " + v->message);
        out.per_kernel.push_back(gain_and_stationary_bias(m, pi));
        out.gain = std::min(out.gain, out.per_kernel.back().gain);
    }
    for (std::size_t i = 0; i < kernels.size(); ++i)
        if (out.per_kernel[i].gain <= out.gain + tie_tol) out.minimizers.push_back(i);
    return out;
}

} // namespace rarl
