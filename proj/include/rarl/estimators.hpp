#pragma once

#include "rarl/mdp.hpp"
#include "rarl/uncertainty.hpp"

#include <concepts>

namespace rarl {

/**
 * Generative access to the nominal kernel: `draw(s, a, count, rng)` returns
 * `count` i.i.d. next states distributed as P(s,a,.).
 */
template <class S>
concept SampleSource = requires(const S& src, index_t s, index_t a, std::size_t count, Rng& rng) {
    { src.n_states() } -> std::convertible_to<std::size_t>;
    { src.draw(s, a, count, rng) } -> std::same_as<std::vector<index_t>>;
};

/**
 * A source that can also return the histogram of `count` i.i.d. draws
 * directly: `add_counts(s, a, count, rng, counts)` adds the number of draws
 * landing on each state to `counts`.
 */
template <class S>
concept CountingSource = SampleSource<S> && requires(const S& src, index_t s, index_t a, std::size_t count, Rng& rng,
                                                     std::span<prec_t> counts) {
    src.add_counts(s, a, count, rng, counts);
};

/// Samples next states from the nominal kernel of a TabularMDP
class KernelSampler {
public:
    explicit KernelSampler(const TabularMDP& mdp) : n_states_(mdp.n_states()), n_actions_(mdp.n_actions()) {
        if (auto v = validate(mdp)) throw std::invalid_argument("invalid MDP: " + v->message);
        prob_.assign(mdp.kernel().data().begin(), mdp.kernel().data().end());
        cdf_.resize(mdp.kernel().rows() * n_states_);
        last_.resize(mdp.kernel().rows());
        for (std::size_t r = 0; r < mdp.kernel().rows(); ++r) {
            auto row = mdp.kernel().row(r);
            prec_t acc = 0;
            for (index_t t = 0; t < n_states_; ++t) {
                acc += row[t];
                cdf_[r * n_states_ + t] = acc;
                if (row[t] > 0) last_[r] = t;
            }
        }
    }

    std::size_t n_states() const noexcept { return n_states_; }

    index_t draw_one(index_t s, index_t a, Rng& rng) const {
        const std::size_t r = s * n_actions_ + a;
        const prec_t* c = cdf_.data() + r * n_states_;
        const prec_t u = std::uniform_real_distribution<prec_t>(0.0, 1.0)(rng);
        const index_t t = index_t(std::upper_bound(c, c + n_states_, u) - c);
        // round-off in the cumulative sum
        return std::min(t, last_[r]);
    }

    std::vector<index_t> draw(index_t s, index_t a, std::size_t count, Rng& rng) const {
        std::vector<index_t> out(count);
        for (auto& x : out) x = draw_one(s, a, rng);
        return out;
    }

    /// Multinomial histogram of `count` draws via conditional binomials
    void add_counts(index_t s, index_t a, std::size_t count, Rng& rng, std::span<prec_t> counts) const {
        const std::size_t r = s * n_actions_ + a;
        const prec_t* p = prob_.data() + r * n_states_;
        std::size_t left = count;
        prec_t mass = 1.0;
        for (index_t t = 0; t < last_[r] && left > 0; ++t) {
            if (p[t] <= 0) continue;
            const prec_t q = std::clamp(p[t] / mass, 0.0, 1.0);
            const auto k = std::size_t(std::binomial_distribution<long long>((long long)left, q)(rng));
            counts[t] += prec_t(k);
            left -= k;
            mass -= p[t];
        }
        counts[last_[r]] += prec_t(left);
    }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    numvec prob_;
    numvec cdf_;
    std::vector<index_t> last_;
};

/// Geometric-level parameters of the multi-level Monte-Carlo estimator
struct MlmcConfig {
    /// Psi; unset means the default for the set family
    std::optional<prec_t> psi;
    int max_level = 20;

    static constexpr prec_t default_psi(SetKind kind) { return kind == SetKind::chi2 ? 0.2 : 0.25; }

    /// Upper end of the admissible open interval (0, bound) for Psi
    static prec_t psi_bound(SetKind kind) {
        return kind == SetKind::chi2 ? 1.0 - std::sqrt(2.0) / 2.0 : 0.5;
    }

    prec_t psi_for(SetKind kind) const {
        const prec_t value = psi.value_or(default_psi(kind));
        if (!(value > 0) || !(value < psi_bound(kind)))
            throw std::invalid_argument("Psi = " + std::to_string(value) + " outside (0, " +
                                        std::to_string(psi_bound(kind)) + ") for " + to_string(kind));
        return value;
    }
};

/// p_N = Psi (1 - Psi)^N
inline prec_t level_probability(prec_t psi, int level) { return psi * std::pow(1.0 - psi, level); }

struct EstimateOutcome {
    prec_t value = 0;
    std::size_t samples_used = 0;
    int level = 0;
    /// the geometric draw reached max_level and was truncated
    bool level_capped = false;
};

/// (1 - delta) V(s') + delta min V
inline prec_t estimate_support_contamination(index_t next_state, prec_t delta, std::span<const prec_t> v) {
    return (1.0 - delta) * v[next_state] + delta * min_of(v);
}

/// Empirical rows built from one batch of 2^{N+1} samples
struct EmpiricalRows {
    numvec first, odd, even, all;
};

/// Odd/even refer to 1-based sample positions: s'_1, s'_3, ... and s'_2, s'_4, ...
inline EmpiricalRows empirical_rows(std::span<const index_t> samples, std::size_t n_states) {
    EmpiricalRows rows{numvec(n_states, 0.0), numvec(n_states, 0.0), numvec(n_states, 0.0),
                       numvec(n_states, 0.0)};
    const std::size_t half = samples.size() / 2;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i % 2 == 0) rows.odd[samples[i]] += 1.0;
        else rows.even[samples[i]] += 1.0;
    }
    for (std::size_t t = 0; t < n_states; ++t) {
        rows.all[t] = (rows.odd[t] + rows.even[t]) / prec_t(samples.size());
        rows.odd[t] /= prec_t(half);
        rows.even[t] /= prec_t(half);
    }
    rows.first[samples[0]] = 1.0;
    return rows;
}

/**
 * Multi-level Monte-Carlo estimate of sigma_{P(s,a)}(V):
 *   sigma_{first}(V) + Delta_N / p_N,
 *   Delta_N = sigma_{all}(V) - (sigma_{even}(V) + sigma_{odd}(V)) / 2,
 * with N ~ Geometric(Psi) (P(N = n) = Psi (1 - Psi)^n), capped at max_level.
 */
template <SampleSource Source>
EstimateOutcome mlmc_estimate_support(const Source& source, const UncertaintySetSpec& spec, index_t s, index_t a,
                                      std::span<const prec_t> v, const MlmcConfig& cfg, Rng& rng) {
    if (spec.kind() == SetKind::contamination)
        throw std::invalid_argument("contamination uses the single-sample estimator");
    const prec_t psi = cfg.psi_for(spec.kind());
    int level = std::geometric_distribution<int>(psi)(rng);
    EstimateOutcome out;
    if (level >= cfg.max_level) {
        level = cfg.max_level;
        out.level_capped = true;
    }
    const std::size_t count = std::size_t(1) << (level + 1);
    EmpiricalRows rows;
    if constexpr (CountingSource<Source>) {
        // same joint law as drawing the samples one by one and counting
        const std::size_t n = source.n_states(), half = count / 2;
        rows = {numvec(n, 0.0), numvec(n, 0.0), numvec(n, 0.0), numvec(n, 0.0)};
        const index_t first = source.draw(s, a, 1, rng)[0];
        rows.first[first] = 1.0;
        rows.odd[first] = 1.0;
        source.add_counts(s, a, half - 1, rng, rows.odd);
        source.add_counts(s, a, half, rng, rows.even);
        for (std::size_t t = 0; t < n; ++t) {
            rows.all[t] = (rows.odd[t] + rows.even[t]) / prec_t(count);
            rows.odd[t] /= prec_t(half);
            rows.even[t] /= prec_t(half);
        }
    } else {
        rows = empirical_rows(source.draw(s, a, count, rng), source.n_states());
    }

    const prec_t first = support_value(spec, rows.first, v);
    const prec_t delta_n = support_value(spec, rows.all, v) -
                           0.5 * (support_value(spec, rows.even, v) + support_value(spec, rows.odd, v));
    out.value = first + delta_n / level_probability(psi, level);
    out.samples_used = count;
    out.level = level;
    return out;
}

/// Unbiased estimate of sigma_{P(s,a)}(V) for any set family
template <SampleSource Source>
EstimateOutcome estimate_support(const Source& source, const UncertaintySetSpec& spec, index_t s, index_t a,
                                 std::span<const prec_t> v, const MlmcConfig& cfg, Rng& rng) {
    if (spec.is_linear()) {
        // the support function is linear in the nominal row: one sample suffices
        const auto next = source.draw(s, a, 1, rng);
        const prec_t delta = spec.kind() == SetKind::contamination ? spec.delta() : 0.0;
        return {estimate_support_contamination(next[0], delta, v), 1, 0, false};
    }
    return mlmc_estimate_support(source, spec, s, a, v, cfg, rng);
}

/// Sampled robust Bellman operator for policy evaluation
struct TEstimate {
    ValueFn t_hat;
    std::size_t cost = 0;
    std::size_t level_caps = 0;
};

/**
 * T^V(s) = sum_a pi(a|s) (r(s,a) + sigma^_{s,a}(V)) with a fresh independent
 * estimate per (s,a). Actions with pi(a|s) = 0 are not sampled.
 */
template <SampleSource Source>
TEstimate estimate_T(const Source& source, const TabularMDP& mdp, const Policy& pi, const UncertaintySetSpec& spec,
                     std::span<const prec_t> v, const MlmcConfig& cfg, Rng& rng) {
    TEstimate out{ValueFn(mdp.n_states(), 0.0), 0, 0};
    for (index_t s = 0; s < mdp.n_states(); ++s)
        for (index_t a = 0; a < mdp.n_actions(); ++a) {
            const prec_t w = pi(s, a);
            if (w == 0) continue;
            const auto est = estimate_support(source, spec, s, a, v, cfg, rng);
            out.t_hat[s] += w * (mdp.reward(s, a) + est.value);
            out.cost += est.samples_used;
            out.level_caps += est.level_capped ? 1 : 0;
        }
    return out;
}

/// H^Q(s,a) = r(s,a) + sigma^_{s,a}(V_Q) with V_Q(s) = max_a Q(s,a)
template <SampleSource Source>
EstimateOutcome estimate_H(const Source& source, const TabularMDP& mdp, const UncertaintySetSpec& spec,
                           std::span<const prec_t> v_q, index_t s, index_t a, const MlmcConfig& cfg, Rng& rng) {
    auto est = estimate_support(source, spec, s, a, v_q, cfg, rng);
    est.value = mdp.reward(s, a) + est.value;
    return est;
}

template <SampleSource Source>
EstimateOutcome estimate_H(const Source& source, const TabularMDP& mdp, const UncertaintySetSpec& spec, const QFn& q,
                           index_t s, index_t a, const MlmcConfig& cfg, Rng& rng) {
    const ValueFn v_q = q.values();
    return estimate_H(source, mdp, spec, std::span<const prec_t>(v_q), s, a, cfg, rng);
}

} // namespace rarl
