#pragma once

#include "rarl/estimators.hpp"
#include "rarl/mdp.hpp"

namespace rarl {

/// Step sizes: constant alpha or Robbins-Monro alpha_n = c / (n + offset)
class StepSchedule {
public:
    struct Constant {
        prec_t alpha;
    };
    struct RobbinsMonro {
        prec_t c;
        prec_t offset;
    };

    StepSchedule() : v_(Constant{0.01}) {}
    static StepSchedule constant(prec_t alpha) {
        if (!(alpha > 0) || alpha > 1) throw std::invalid_argument("constant step size must lie in (0,1]");
        return StepSchedule(Constant{alpha});
    }
    static StepSchedule robbins_monro(prec_t c, prec_t offset) {
        if (!(c > 0) || !(offset > 0)) throw std::invalid_argument("Robbins-Monro needs c > 0 and offset > 0");
        return StepSchedule(RobbinsMonro{c, offset});
    }

    /// alpha_n for n = 0, 1, 2, ...
    prec_t operator()(std::size_t n) const {
        if (const auto* c = std::get_if<Constant>(&v_)) return c->alpha;
        const auto& rm = std::get<RobbinsMonro>(v_);
        return rm.c / (prec_t(n) + rm.offset);
    }

    /// Satisfies sum alpha_n = inf and sum alpha_n^2 < inf
    bool is_robbins_monro() const { return std::holds_alternative<RobbinsMonro>(v_); }

    const auto& variant() const noexcept { return v_; }

private:
    template <class T>
    explicit StepSchedule(T v) : v_(v) {}
    std::variant<Constant, RobbinsMonro> v_;
};

struct TraceRecord {
    std::size_t iter;
    prec_t f_value;
    std::size_t cost;
};

/**
 * Per-iteration record of a learner run. Record i holds f(V_n) (or f(Q_n))
 * after the n-th update, n = i + 1, and the cumulative number of samples.
 */
struct RunTrace {
    std::vector<TraceRecord> records;
    /// (n, flattened V_n or Q_n) every snapshot_every iterations
    std::vector<std::pair<std::size_t, numvec>> snapshots;
    ValueFn final_v;
    std::optional<QFn> final_q;
    std::size_t level_caps = 0;

    prec_t final_f() const { return records.empty() ? std::numeric_limits<prec_t>::quiet_NaN() : records.back().f_value; }
};

/// CSV export with header iter,f_value,cost
inline std::string trace_to_csv(const RunTrace& t) {
    std::string out = "iter,f_value,cost\n";
    char buf[64];
    for (const auto& r : t.records) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%zu\n", r.iter, r.f_value, r.cost);
        out += buf;
    }
    return out;
}

/// Snapshots as [{"iter": n, "values": [...]}, ...]
inline nlohmann::json snapshots_to_json(const RunTrace& t) {
    auto out = nlohmann::json::array();
    for (const auto& [n, v] : t.snapshots) out.push_back({{"iter", n}, {"values", v}});
    return out;
}

struct LearnerOptions {
    std::size_t n_iters = 10'000;
    std::size_t snapshot_every = 0;
    /// abort when |V_n| exceeds this
    prec_t divergence_bound = 1e8;
};

namespace detail {
inline void guard(std::span<const prec_t> x, prec_t bound, std::size_t n) {
    for (prec_t v : x) {
        if (!std::isfinite(v)) throw divergence_error("non-finite iterate", n);
        if (std::abs(v) > bound) throw divergence_error("iterate norm exceeded bound", n);
    }
}
} // namespace detail

/**
 * Robust RVI TD for policy evaluation:
 *   V_{n+1}(s) = V_n(s) + alpha_n (T^V_n(s) - f(V_n) - V_n(s))
 * synchronously over all states, with T^ from estimate_T.
 */
template <SampleSource Source>
RunTrace robust_rvi_td(const Source& source, const TabularMDP& mdp, const Policy& pi, const UncertaintySetSpec& spec,
                       const OffsetFn& offset, const StepSchedule& schedule, const LearnerOptions& opts,
                       const MlmcConfig& cfg, Rng& rng, ValueFn v0 = {}) {
    check_dims(mdp, pi);
    const std::size_t n = mdp.n_states();
    ValueFn v = v0.empty() ? ValueFn(n, 0.0) : std::move(v0);
    if (v.size() != n) throw std::invalid_argument("initial value function size mismatch");

    RunTrace trace;
    trace.records.reserve(opts.n_iters);
    std::size_t cost = 0;
    for (std::size_t it = 0; it < opts.n_iters; ++it) {
        const auto est = estimate_T(source, mdp, pi, spec, v, cfg, rng);
        const prec_t fv = offset(v);
        const prec_t alpha = schedule(it);
        for (index_t s = 0; s < n; ++s) v[s] += alpha * (est.t_hat[s] - fv - v[s]);
        detail::guard(v, opts.divergence_bound, it + 1);
        cost += est.cost;
        trace.level_caps += est.level_caps;
        trace.records.push_back({it + 1, offset(v), cost});
        if (opts.snapshot_every > 0 && (it + 1) % opts.snapshot_every == 0) trace.snapshots.emplace_back(it + 1, v);
    }
    trace.final_v = std::move(v);
    return trace;
}

/**
 * Robust RVI Q-learning:
 *   Q_{n+1}(s,a) = Q_n(s,a) + alpha_n (H^Q_n(s,a) - f(Q_n) - Q_n(s,a))
 * synchronously over all (s,a); f acts on the flattened Q.
 */
template <SampleSource Source>
RunTrace robust_rvi_q(const Source& source, const TabularMDP& mdp, const UncertaintySetSpec& spec,
                      const OffsetFn& offset, const StepSchedule& schedule, const LearnerOptions& opts,
                      const MlmcConfig& cfg, Rng& rng, QFn q0 = {}) {
    QFn q = q0.n_states() == 0 ? QFn(mdp.n_states(), mdp.n_actions()) : std::move(q0);
    if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions())
        throw std::invalid_argument("initial Q function shape mismatch");

    RunTrace trace;
    trace.records.reserve(opts.n_iters);
    std::size_t cost = 0;
    numvec h(mdp.n_states() * mdp.n_actions());
    for (std::size_t it = 0; it < opts.n_iters; ++it) {
        const ValueFn v_q = q.values();
        for (index_t s = 0; s < mdp.n_states(); ++s)
            for (index_t a = 0; a < mdp.n_actions(); ++a) {
                const auto est = estimate_H(source, mdp, spec, std::span<const prec_t>(v_q), s, a, cfg, rng);
                h[s * mdp.n_actions() + a] = est.value;
                cost += est.samples_used;
                trace.level_caps += est.level_capped ? 1 : 0;
            }
        const prec_t fq = offset(q.flat());
        const prec_t alpha = schedule(it);
        auto flat = q.flat();
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += alpha * (h[i] - fq - flat[i]);
        detail::guard(flat, opts.divergence_bound, it + 1);
        trace.records.push_back({it + 1, offset(q.flat()), cost});
        if (opts.snapshot_every > 0 && (it + 1) % opts.snapshot_every == 0)
            trace.snapshots.emplace_back(it + 1, numvec(flat.begin(), flat.end()));
    }
    trace.final_v = q.values();
    trace.final_q = std::move(q);
    return trace;
}

/// Deterministic greedy policy; ties go to the lowest action index
inline Policy greedy_policy(const QFn& q) {
    std::vector<index_t> actions(q.n_states());
    for (index_t s = 0; s < q.n_states(); ++s) {
        index_t best = 0;
        for (index_t a = 1; a < q.n_actions(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        actions[s] = best;
    }
    return Policy::deterministic(actions, q.n_actions());
}

} // namespace rarl
