#pragma once

#include "rarl/mdp.hpp"
#include "rarl/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <variant>

// Support functions sigma(V) = min_{q in P} q.V over (s,a)-rectangular balls
// around a nominal row p.

namespace rarl {

struct Contamination {
    prec_t delta;
};
struct TotalVariation {
    prec_t delta;
};
struct ChiSquare {
    prec_t delta;
};
struct KullbackLeibler {
    prec_t delta;
};
/// W_l ball; an empty metric means d(i,j) = |i - j|
struct Wasserstein {
    prec_t delta;
    prec_t order = 1.0;
    std::vector<numvec> metric;
};

enum class SetKind { contamination, tv, chi2, kl, wasserstein };

inline std::string to_string(SetKind k) {
    switch (k) {
    case SetKind::contamination: return "contamination";
    case SetKind::tv: return "tv";
    case SetKind::chi2: return "chi2";
    case SetKind::kl: return "kl";
    case SetKind::wasserstein: return "wasserstein";
    }
    return "?";
}

inline SetKind set_kind_from_string(const std::string& s) {
    if (s == "contamination") return SetKind::contamination;
    if (s == "tv") return SetKind::tv;
    if (s == "chi2") return SetKind::chi2;
    if (s == "kl") return SetKind::kl;
    if (s == "wasserstein") return SetKind::wasserstein;
    throw std::invalid_argument("unknown uncertainty set kind '" + s + "'");
}

/**
 * Tagged description of one uncertainty-set family and its radius.
 *
 * Radius zero is accepted for every family and denotes the nominal
 * (non-robust) model.
 */
class UncertaintySetSpec {
public:
    using Variant = std::variant<Contamination, TotalVariation, ChiSquare, KullbackLeibler, Wasserstein>;

    UncertaintySetSpec() : set_(Contamination{0.0}) {}
    UncertaintySetSpec(Variant v) : set_(std::move(v)) { check(); }

    static UncertaintySetSpec contamination(prec_t delta) { return {Contamination{delta}}; }
    static UncertaintySetSpec tv(prec_t delta) { return {TotalVariation{delta}}; }
    static UncertaintySetSpec chi2(prec_t delta) { return {ChiSquare{delta}}; }
    static UncertaintySetSpec kl(prec_t delta) { return {KullbackLeibler{delta}}; }
    static UncertaintySetSpec wasserstein(prec_t delta, prec_t order = 1.0,
                                          std::vector<numvec> metric = {}) {
        return {Wasserstein{delta, order, std::move(metric)}};
    }

    static UncertaintySetSpec make(SetKind kind, prec_t delta) {
        switch (kind) {
        case SetKind::contamination: return contamination(delta);
        case SetKind::tv: return tv(delta);
        case SetKind::chi2: return chi2(delta);
        case SetKind::kl: return kl(delta);
        case SetKind::wasserstein: return wasserstein(delta);
        }
        throw std::invalid_argument("bad set kind");
    }

    SetKind kind() const noexcept { return SetKind(set_.index()); }
    prec_t delta() const {
        return std::visit([](const auto& s) { return s.delta; }, set_);
    }
    /// Same family, different radius
    UncertaintySetSpec with_delta(prec_t delta) const {
        Variant v = set_;
        std::visit([&](auto& s) { s.delta = delta; }, v);
        return {std::move(v)};
    }

    /// Support function is linear in the nominal row
    bool is_linear() const { return kind() == SetKind::contamination || delta() == 0; }

    const Variant& variant() const noexcept { return set_; }

private:
    void check() const {
        const prec_t d = delta();
        if (!std::isfinite(d) || d < 0) throw std::invalid_argument("uncertainty radius must be finite and >= 0");
        if (kind() == SetKind::contamination && d > 1)
            throw std::invalid_argument("contamination radius must lie in [0,1]");
        if (const auto* w = std::get_if<Wasserstein>(&set_)) {
            if (!(w->order >= 1) || !std::isfinite(w->order))
                throw std::invalid_argument("Wasserstein order must be in [1, inf)");
            const std::size_t n = w->metric.size();
            for (std::size_t i = 0; i < n; ++i) {
                if (w->metric[i].size() != n) throw std::invalid_argument("metric must be square");
                if (w->metric[i][i] != 0) throw std::invalid_argument("metric diagonal must be zero");
                for (std::size_t j = 0; j < n; ++j)
                    if (w->metric[i][j] < 0 || w->metric[i][j] != w->metric[j][i])
                        throw std::invalid_argument("metric must be symmetric and nonnegative");
            }
        }
    }

    Variant set_;
};

/// Dual variable of the support problem: none, a scalar (alpha, lambda) or a vector (mu)
using DualVariable = std::variant<std::monostate, prec_t, numvec>;

struct SupportResult {
    prec_t value = 0;
    DualVariable dual;
    std::optional<numvec> worst_row;
};

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void check_support_inputs(std::span<const prec_t> p, std::span<const prec_t> v) {
    if (p.size() != v.size()) throw std::invalid_argument("nominal row and value function sizes differ");
    if (!is_simplex(p)) throw std::invalid_argument("nominal row is not a probability vector");
    if (!all_finite(v)) throw std::invalid_argument("value function has non-finite entries");
}

inline index_t argmin(std::span<const prec_t> v) {
    return index_t(std::min_element(v.begin(), v.end()) - v.begin());
}

/// Minimum of V over the support of p
inline prec_t support_min(std::span<const prec_t> p, std::span<const prec_t> v) {
    prec_t m = std::numeric_limits<prec_t>::infinity();
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) m = std::min(m, v[i]);
    return m;
}

inline prec_t support_max(std::span<const prec_t> p, std::span<const prec_t> v) {
    prec_t m = -std::numeric_limits<prec_t>::infinity();
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) m = std::max(m, v[i]);
    return m;
}

/// Golden-section minimization of a unimodal function on [lo, hi]
template <class F>
std::pair<prec_t, prec_t> golden_section_min(F&& f, prec_t lo, prec_t hi, prec_t tol = 1e-10,
                                             int max_iters = 200) {
    const prec_t invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    prec_t a = lo, b = hi;
    prec_t c = b - invphi * (b - a), d = a + invphi * (b - a);
    prec_t fc = f(c), fd = f(d);
    for (int it = 0; it < max_iters && (b - a) > tol; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    const prec_t x = 0.5 * (a + b);
    prec_t fx = f(x);
    // endpoints matter when the minimum sits on the boundary
    const prec_t fl = f(lo), fh = f(hi);
    if (fl < fx) return {lo, fl};
    if (fh < fx) return {hi, fh};
    return {x, fx};
}

/// Ternary search for the maximum of a concave function on [lo, hi]
template <class F>
std::pair<prec_t, prec_t> ternary_search_max(F&& f, prec_t lo, prec_t hi, prec_t tol = 1e-10,
                                             int max_iters = 200) {
    prec_t a = lo, b = hi;
    for (int it = 0; it < max_iters && (b - a) > tol; ++it) {
        const prec_t m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
        if (f(m1) < f(m2)) a = m1;
        else b = m2;
    }
    const prec_t x = 0.5 * (a + b);
    prec_t best_x = x, best = f(x);
    for (prec_t cand : {lo, hi}) {
        const prec_t fc = f(cand);
        if (fc > best) {
            best = fc;
            best_x = cand;
        }
    }
    return {best_x, best};
}

inline std::vector<numvec> line_metric(std::size_t n) {
    std::vector<numvec> d(n, numvec(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = std::abs(prec_t(i) - prec_t(j));
    return d;
}

/// d(i,j)^l for the Wasserstein spec, defaulting to the line metric
inline std::vector<numvec> cost_matrix(const Wasserstein& w, std::size_t n) {
    std::vector<numvec> d = w.metric.empty() ? line_metric(n) : w.metric;
    if (d.size() != n) throw std::invalid_argument("Wasserstein metric size does not match the state space");
    for (auto& row : d)
        for (auto& x : row) x = std::pow(x, w.order);
    return d;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Contamination
// ---------------------------------------------------------------------------

/// (1 - delta) p.V + delta min V
inline SupportResult support_contamination(prec_t delta, std::span<const prec_t> p,
                                           std::span<const prec_t> v) {
    const index_t k = detail::argmin(v);
    numvec q(p.begin(), p.end());
    for (auto& x : q) x *= (1.0 - delta);
    q[k] += delta;
    SupportResult r;
    r.value = (1.0 - delta) * dot(p, v) + delta * v[k];
    r.worst_row = std::move(q);
    return r;
}

// ---------------------------------------------------------------------------
// Total variation
// ---------------------------------------------------------------------------

/**
 * Exact minimizer of q.V over {q in simplex : 0.5 |q - p|_1 <= delta}.
 *
 * Moves up to delta mass from the states with the highest V (clipping at the
 * mass each holds) onto the argmin state.
 */
inline std::pair<numvec, prec_t> tv_greedy(prec_t delta, std::span<const prec_t> p,
                                           std::span<const prec_t> v) {
    const std::size_t n = p.size();
    std::vector<index_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](index_t i, index_t j) { return v[i] < v[j]; });

    numvec q(p.begin(), p.end());
    const index_t k = order[0];
    prec_t budget = std::min(delta, 1.0 - p[k]);
    q[k] += budget;
    for (std::size_t i = n - 1; budget > 0 && i > 0; --i) {
        const index_t j = order[i];
        const prec_t moved = std::min(budget, q[j]);
        q[j] -= moved;
        budget -= moved;
    }
    // guard against round-off when every other state was emptied
    if (budget > 0) q[k] -= budget;
    return {q, dot(q, v)};
}

/**
 * Dual of the TV support function, max_{mu >= 0} p.(V - mu) - delta Span(V - mu).
 *
 * The maximum is attained at mu = (V - eta)_+ with eta one of the values of V
 * (the objective is concave and piecewise linear in eta), so the breakpoints
 * are enumerated. Returns the optimal mu and the dual value.
 */
inline std::pair<numvec, prec_t> tv_dual(prec_t delta, std::span<const prec_t> p,
                                         std::span<const prec_t> v) {
    const std::size_t n = v.size();
    const prec_t vmin = min_of(v);
    prec_t best = -std::numeric_limits<prec_t>::infinity();
    prec_t best_eta = max_of(v);
    for (prec_t eta : v) {
        prec_t pv = 0, hi = vmin;
        for (std::size_t i = 0; i < n; ++i) {
            const prec_t c = std::min(v[i], eta);
            pv += p[i] * c;
            hi = std::max(hi, c);
        }
        const prec_t val = pv - delta * (hi - vmin);
        if (val > best) {
            best = val;
            best_eta = eta;
        }
    }
    numvec mu(n);
    for (std::size_t i = 0; i < n; ++i) mu[i] = std::max(0.0, v[i] - best_eta);
    return {mu, best};
}

/// Value of the TV dual objective at a given mu
inline prec_t tv_dual_objective(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v,
                                std::span<const prec_t> mu) {
    numvec x(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i] - mu[i];
    return dot(p, x) - delta * span(x);
}

inline SupportResult support_tv(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v) {
    auto [q, value] = tv_greedy(delta, p, v);
    SupportResult r;
    r.value = value;
    r.dual = tv_dual(delta, p, v).first;
    r.worst_row = std::move(q);
    return r;
}

// ---------------------------------------------------------------------------
// Chi-square
// ---------------------------------------------------------------------------

/// p.(V - mu) - sqrt(delta Var_p(V - mu))
inline prec_t chi2_dual_objective(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v,
                                  std::span<const prec_t> mu) {
    prec_t m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const prec_t x = v[i] - mu[i];
        m1 += p[i] * x;
        m2 += p[i] * x * x;
    }
    const prec_t var = std::max(0.0, m2 - m1 * m1);
    return m1 - std::sqrt(delta * var);
}

namespace detail {
/// E_p[w^2] / E_p[w]^2 for w = (eta - V)_+ on the support of p
inline prec_t chi2_ratio(prec_t eta, std::span<const prec_t> p, std::span<const prec_t> v) {
    prec_t m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0) continue;
        const prec_t w = std::max(0.0, eta - v[i]);
        m1 += p[i] * w;
        m2 += p[i] * w * w;
    }
    return m2 / (m1 * m1);
}
} // namespace detail

/**
 * Chi-square support function, solved in the primal.
 *
 * The KKT conditions give q(s) = p(s) (eta - V(s))_+ / E_p[(eta - V)_+] with the
 * level eta fixed by the active constraint E_p[w^2] / E_p[w]^2 = 1 + delta.
 * The ratio is decreasing in eta, so eta is found by bisection. The matching
 * dual vector is mu = (V - eta)_+. States outside the support of p cannot
 * receive mass.
 */
inline SupportResult support_chi2(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v) {
    const std::size_t n = p.size();
    SupportResult r;
    const prec_t m = detail::support_min(p, v);
    const prec_t vmax = detail::support_max(p, v);
    if (delta == 0 || vmax - m <= 0) {
        r.value = dot(p, v);
        r.dual = numvec(n, 0.0);
        r.worst_row = numvec(p.begin(), p.end());
        return r;
    }

    prec_t mass_at_min = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (p[i] > 0 && v[i] == m) mass_at_min += p[i];

    numvec q(n, 0.0);
    prec_t eta;
    if ((1.0 - mass_at_min) / mass_at_min <= delta) {
        // enough budget to put all mass on the minimizers
        eta = m;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] > 0 && v[i] == m) q[i] = p[i] / mass_at_min;
    } else {
        prec_t mean = 0, second = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += p[i] * v[i];
            second += p[i] * v[i] * v[i];
        }
        const prec_t var = std::max(0.0, second - mean * mean);
        prec_t lo = m, hi = std::max(vmax, mean + std::sqrt(var / delta));
        if (detail::chi2_ratio(hi, p, v) > 1.0 + delta) hi += (vmax - m);
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
            const prec_t mid = 0.5 * (lo + hi);
            if (detail::chi2_ratio(mid, p, v) > 1.0 + delta) lo = mid;
            else hi = mid;
        }
        eta = hi;
        prec_t norm = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (p[i] <= 0) continue;
            q[i] = p[i] * std::max(0.0, eta - v[i]);
            norm += q[i];
        }
        for (auto& x : q) x /= norm;
    }
    numvec mu(n);
    for (std::size_t i = 0; i < n; ++i) mu[i] = std::max(0.0, v[i] - eta);
    r.value = dot(q, v);
    r.dual = std::move(mu);
    r.worst_row = std::move(q);
    return r;
}

/**
 * Chi-square dual maximized over the clipping family mu = (V - eta)_+ by a
 * scan over eta followed by golden-section refinement. Independent of the
 * primal route and used to cross-check it.
 */
inline prec_t chi2_dual_value(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v) {
    const std::size_t n = v.size();
    const prec_t lo = detail::support_min(p, v);
    const prec_t hi = detail::support_max(p, v);
    if (hi <= lo) return dot(p, v);
    auto objective = [&](prec_t eta) {
        numvec mu(n);
        for (std::size_t i = 0; i < n; ++i) mu[i] = std::max(0.0, v[i] - eta);
        return chi2_dual_objective(delta, p, v, mu);
    };
    const int grid = 400;
    prec_t best_eta = hi, best = objective(hi);
    for (int k = 0; k <= grid; ++k) {
        const prec_t eta = lo + (hi - lo) * prec_t(k) / grid;
        const prec_t val = objective(eta);
        if (val > best) {
            best = val;
            best_eta = eta;
        }
    }
    const prec_t step = (hi - lo) / grid;
    auto [x, neg] = detail::golden_section_min([&](prec_t eta) { return -objective(eta); },
                                               std::max(lo, best_eta - step), std::min(hi, best_eta + step),
                                               1e-13);
    return std::max(best, -neg);
}

// ---------------------------------------------------------------------------
// KL divergence
// ---------------------------------------------------------------------------

/// delta alpha + alpha log E_p[exp(-V/alpha)], in shifted log-sum-exp form
inline prec_t kl_dual_objective(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v,
                                prec_t alpha) {
    const prec_t m = detail::support_min(p, v);
    prec_t acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0) acc += p[i] * std::exp(-(v[i] - m) / alpha);
    return delta * alpha - m + alpha * std::log(acc);
}

/**
 * KL support function: -min_{alpha >= 0} (delta alpha + alpha log E_p e^{-V/alpha}).
 *
 * The objective is convex in alpha; golden-section search on
 * [1e-8, max(1, Span_p(V)/delta)]. The minimizer cannot exceed Span_p(V)/delta
 * because the objective is at least delta alpha - p.V and tends to -min V as
 * alpha -> 0. The alpha -> 0 limit (min of V over the support) is compared
 * analytically.
 */
inline SupportResult support_kl(prec_t delta, std::span<const prec_t> p, std::span<const prec_t> v) {
    const std::size_t n = p.size();
    SupportResult r;
    const prec_t m = detail::support_min(p, v);
    const prec_t spread = detail::support_max(p, v) - m;
    if (delta == 0 || spread <= 0) {
        r.value = dot(p, v);
        r.dual = 0.0;
        r.worst_row = numvec(p.begin(), p.end());
        return r;
    }
    const prec_t alpha_max = std::max(1.0, spread / delta);
    auto [alpha, hmin] = detail::golden_section_min(
        [&](prec_t a) { return kl_dual_objective(delta, p, v, a); }, 1e-8, alpha_max, 1e-10 * alpha_max);

    numvec q(n, 0.0);
    if (-hmin <= m) {
        // boundary case: all mass on the minimizers within the support
        prec_t mass = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] > 0 && v[i] == m) mass += p[i];
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] > 0 && v[i] == m) q[i] = p[i] / mass;
        r.value = m;
        r.dual = 0.0;
    } else {
        prec_t norm = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (p[i] <= 0) continue;
            q[i] = p[i] * std::exp(-(v[i] - m) / alpha);
            norm += q[i];
        }
        for (auto& x : q) x /= norm;
        r.value = -hmin;
        r.dual = alpha;
    }
    r.worst_row = std::move(q);
    return r;
}

// ---------------------------------------------------------------------------
// Wasserstein
// ---------------------------------------------------------------------------

/// -lambda delta^l + sum_x p(x) min_y (V(y) + lambda d(x,y)^l)
inline prec_t wasserstein_dual_objective(prec_t delta_l, std::span<const prec_t> p,
                                         std::span<const prec_t> v, const std::vector<numvec>& cost,
                                         prec_t lambda) {
    prec_t acc = 0;
    for (std::size_t x = 0; x < p.size(); ++x) {
        if (p[x] <= 0) continue;
        prec_t best = std::numeric_limits<prec_t>::infinity();
        for (std::size_t y = 0; y < v.size(); ++y) best = std::min(best, v[y] + lambda * cost[x][y]);
        acc += p[x] * best;
    }
    return -lambda * delta_l + acc;
}

namespace detail {
/// Row obtained by moving each x to its inner minimizer at lambda, with the
/// tie broken toward the cheapest (prefer_near) or most expensive transport.
inline std::pair<numvec, prec_t> wasserstein_transport(std::span<const prec_t> p, std::span<const prec_t> v,
                                                       const std::vector<numvec>& cost, prec_t lambda,
                                                       bool prefer_near) {
    const std::size_t n = p.size();
    numvec q(n, 0.0);
    prec_t moved_cost = 0;
    for (std::size_t x = 0; x < n; ++x) {
        if (p[x] <= 0) continue;
        prec_t best = std::numeric_limits<prec_t>::infinity();
        for (std::size_t y = 0; y < n; ++y) best = std::min(best, v[y] + lambda * cost[x][y]);
        const prec_t tie = 1e-9 * std::max(1.0, std::abs(best));
        std::size_t pick = x;
        prec_t pick_cost = prefer_near ? std::numeric_limits<prec_t>::infinity() : -1.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (v[y] + lambda * cost[x][y] > best + tie) continue;
            if (prefer_near ? cost[x][y] < pick_cost : cost[x][y] > pick_cost) {
                pick = y;
                pick_cost = cost[x][y];
            }
        }
        q[pick] += p[x];
        moved_cost += p[x] * cost[x][pick];
    }
    return {q, moved_cost};
}
} // namespace detail

/**
 * Wasserstein support function via its one-dimensional concave dual in
 * lambda, bracketed by [0, 2 |V| / delta^l]. The worst row is rebuilt from
 * the inner minimizers at the optimal lambda, mixing the two tie-breaks so
 * that the transport budget delta^l is met.
 */
inline SupportResult support_wasserstein(const Wasserstein& w, std::span<const prec_t> p,
                                         std::span<const prec_t> v, bool with_row = true) {
    SupportResult r;
    if (w.delta == 0) {
        r.value = dot(p, v);
        r.dual = 0.0;
        r.worst_row = numvec(p.begin(), p.end());
        return r;
    }
    const auto cost = detail::cost_matrix(w, p.size());
    const prec_t delta_l = std::pow(w.delta, w.order);
    const prec_t vnorm = norm_inf(v);
    const prec_t lambda_max = 2.0 * vnorm / delta_l;
    auto [lambda, value] = detail::ternary_search_max(
        [&](prec_t l) { return wasserstein_dual_objective(delta_l, p, v, cost, l); }, 0.0, lambda_max,
        1e-10 * std::max(1.0, lambda_max));
    r.value = value;
    r.dual = lambda;
    if (!with_row) return r;

    // the dual is piecewise linear in lambda: snap to the nearest kink so the
    // inner minimizers tie exactly
    prec_t below = 0.0, above = lambda_max;
    const std::size_t n = p.size();
    for (std::size_t x = 0; x < n; ++x) {
        if (p[x] <= 0) continue;
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t z = 0; z < n; ++z) {
                const prec_t dc = cost[x][z] - cost[x][y];
                if (dc <= 0) continue;
                const prec_t kink = (v[y] - v[z]) / dc;
                if (kink < 0 || kink > lambda_max) continue;
                if (kink <= lambda) below = std::max(below, kink);
                else above = std::min(above, kink);
            }
    }
    for (prec_t cand : {below, above}) {
        const prec_t val = wasserstein_dual_objective(delta_l, p, v, cost, cand);
        if (val >= r.value) {
            r.value = val;
            r.dual = cand;
        }
    }
    lambda = std::get<prec_t>(r.dual);

    auto [q_near, c_near] = detail::wasserstein_transport(p, v, cost, lambda, true);
    auto [q_far, c_far] = detail::wasserstein_transport(p, v, cost, lambda, false);
    numvec q = q_far;
    if (c_far > delta_l && c_far > c_near) {
        const prec_t theta = std::clamp((delta_l - c_near) / (c_far - c_near), 0.0, 1.0);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] = (1 - theta) * q_near[i] + theta * q_far[i];
    }
    r.worst_row = std::move(q);
    return r;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

/// sigma_P(V) = min_{q in P} q.V for the ball P around the nominal row p
inline SupportResult support_exact(const UncertaintySetSpec& spec, std::span<const prec_t> p,
                                   std::span<const prec_t> v) {
    detail::check_support_inputs(p, v);
    return std::visit(
        [&](const auto& set) -> SupportResult {
            using T = std::decay_t<decltype(set)>;
            if constexpr (std::is_same_v<T, Contamination>) return support_contamination(set.delta, p, v);
            else if constexpr (std::is_same_v<T, TotalVariation>) return support_tv(set.delta, p, v);
            else if constexpr (std::is_same_v<T, ChiSquare>) return support_chi2(set.delta, p, v);
            else if constexpr (std::is_same_v<T, KullbackLeibler>) return support_kl(set.delta, p, v);
            else return support_wasserstein(set, p, v);
        },
        spec.variant());
}

/// Only the optimal value; skips the input validation of support_exact
inline prec_t support_value(const UncertaintySetSpec& spec, std::span<const prec_t> p,
                            std::span<const prec_t> v) {
    return std::visit(
        [&](const auto& set) -> prec_t {
            using T = std::decay_t<decltype(set)>;
            if constexpr (std::is_same_v<T, Contamination>)
                return (1.0 - set.delta) * dot(p, v) + set.delta * min_of(v);
            else if constexpr (std::is_same_v<T, TotalVariation>) return tv_greedy(set.delta, p, v).second;
            else if constexpr (std::is_same_v<T, ChiSquare>) return support_chi2(set.delta, p, v).value;
            else if constexpr (std::is_same_v<T, KullbackLeibler>) return support_kl(set.delta, p, v).value;
            else return support_wasserstein(set, p, v, false).value;
        },
        spec.variant());
}

/// P_V: a minimizer of q.V over the set (any one when not unique)
inline numvec worst_case_row(const UncertaintySetSpec& spec, std::span<const prec_t> p,
                             std::span<const prec_t> v) {
    return *support_exact(spec, p, v).worst_row;
}

// ---------------------------------------------------------------------------
// membership and the grid oracle
// ---------------------------------------------------------------------------

/**
 * W_l(p,q)^l, the optimal transport cost between two distributions, by
 * successive shortest paths on the bipartite transport network.
 */
inline prec_t transport_cost(std::span<const prec_t> p, std::span<const prec_t> q,
                             const std::vector<numvec>& cost) {
    const std::size_t n = p.size();
    // nodes: 0 source, 1..n suppliers, n+1..2n consumers, 2n+1 sink
    const std::size_t N = 2 * n + 2, src = 0, sink = 2 * n + 1;
    struct Edge {
        std::size_t to;
        prec_t cap, cost;
        std::size_t rev;
    };
    std::vector<std::vector<Edge>> g(N);
    auto add = [&](std::size_t u, std::size_t w, prec_t cap, prec_t c) {
        g[u].push_back({w, cap, c, g[w].size()});
        g[w].push_back({u, 0.0, -c, g[u].size() - 1});
    };
    const prec_t inf = std::numeric_limits<prec_t>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        add(src, 1 + i, p[i], 0.0);
        add(n + 1 + i, sink, q[i], 0.0);
        for (std::size_t j = 0; j < n; ++j) add(1 + i, n + 1 + j, inf, cost[i][j]);
    }
    prec_t remaining = 0;
    for (prec_t x : p) remaining += x;
    prec_t total = 0;
    const prec_t eps = 1e-15;
    while (remaining > 1e-13) {
        std::vector<prec_t> dist(N, inf);
        std::vector<std::size_t> prev_node(N, N), prev_edge(N, 0);
        dist[src] = 0;
        for (std::size_t round = 0; round < N; ++round) {
            bool changed = false;
            for (std::size_t u = 0; u < N; ++u) {
                if (dist[u] == inf) continue;
                for (std::size_t e = 0; e < g[u].size(); ++e) {
                    const Edge& ed = g[u][e];
                    if (ed.cap > eps && dist[u] + ed.cost < dist[ed.to] - 1e-15) {
                        dist[ed.to] = dist[u] + ed.cost;
                        prev_node[ed.to] = u;
                        prev_edge[ed.to] = e;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (dist[sink] == inf) break;
        prec_t push = remaining;
        for (std::size_t v = sink; v != src; v = prev_node[v])
            push = std::min(push, g[prev_node[v]][prev_edge[v]].cap);
        for (std::size_t v = sink; v != src; v = prev_node[v]) {
            Edge& ed = g[prev_node[v]][prev_edge[v]];
            ed.cap -= push;
            g[v][ed.rev].cap += push;
        }
        total += push * dist[sink];
        remaining -= push;
    }
    return total;
}

/// Is q inside the uncertainty ball around p (up to slack)?
inline bool contains(const UncertaintySetSpec& spec, std::span<const prec_t> p, std::span<const prec_t> q,
                     prec_t slack = 1e-12) {
    const std::size_t n = p.size();
    return std::visit(
        [&](const auto& set) -> bool {
            using T = std::decay_t<decltype(set)>;
            if constexpr (std::is_same_v<T, Contamination>) {
                // q = (1 - delta) p + delta r with r a distribution
                for (std::size_t i = 0; i < n; ++i)
                    if (q[i] - (1.0 - set.delta) * p[i] < -slack) return false;
                return true;
            } else if constexpr (std::is_same_v<T, TotalVariation>) {
                prec_t l1 = 0;
                for (std::size_t i = 0; i < n; ++i) l1 += std::abs(q[i] - p[i]);
                return 0.5 * l1 <= set.delta + slack;
            } else if constexpr (std::is_same_v<T, ChiSquare>) {
                prec_t d = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (p[i] <= 0) {
                        if (q[i] > slack) return false;
                        continue;
                    }
                    d += (p[i] - q[i]) * (p[i] - q[i]) / p[i];
                }
                return d <= set.delta + slack;
            } else if constexpr (std::is_same_v<T, KullbackLeibler>) {
                prec_t d = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (q[i] <= 0) continue;
                    if (p[i] <= 0) return false;
                    d += q[i] * std::log(q[i] / p[i]);
                }
                return d <= set.delta + slack;
            } else {
                const auto cost = detail::cost_matrix(set, n);
                return transport_cost(p, q, cost) <= std::pow(set.delta, set.order) + slack;
            }
        },
        spec.variant());
}

namespace detail {
/// W_l^l for the line metric via the monotone (quantile) coupling
inline prec_t line_transport_cost(std::span<const prec_t> p, std::span<const prec_t> q, prec_t order) {
    const std::size_t n = p.size();
    std::size_t i = 0, j = 0;
    prec_t pi = p[0], qj = q[0], total = 0;
    while (i < n && j < n) {
        const prec_t m = std::min(pi, qj);
        total += m * std::pow(std::abs(prec_t(i) - prec_t(j)), order);
        pi -= m;
        qj -= m;
        if (pi <= 1e-15) {
            if (++i < n) pi = p[i];
        }
        if (qj <= 1e-15) {
            if (++j < n) qj = q[j];
        }
    }
    return total;
}
} // namespace detail

/**
 * Brute-force oracle: minimum of q.V over the points of the simplex grid with
 * step 1/resolution that lie in the set. Converges to sigma from above.
 * Limited to at most 4 states.
 */
inline prec_t support_oracle_grid(const UncertaintySetSpec& spec, std::span<const prec_t> p,
                                  std::span<const prec_t> v, int resolution) {
    const std::size_t n = p.size();
    if (n > 4) throw std::invalid_argument("grid oracle supports at most 4 states");
    if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
    detail::check_support_inputs(p, v);

    const auto* wass = std::get_if<Wasserstein>(&spec.variant());
    const bool line = wass && wass->metric.empty();
    const prec_t budget = wass ? std::pow(wass->delta, wass->order) : 0.0;
    auto feasible = [&](const numvec& q) {
        if (line) return detail::line_transport_cost(p, q, wass->order) <= budget + 1e-12;
        return contains(spec, p, q);
    };

    prec_t best = std::numeric_limits<prec_t>::infinity();
    numvec q(n, 0.0);
    std::vector<int> k(n, 0);
    // enumerate compositions k_0 + ... + k_{n-1} = resolution
    auto visit = [&](auto&& self, std::size_t i, int left) -> void {
        if (i + 1 == n) {
            k[i] = left;
            prec_t obj = 0;
            for (std::size_t j = 0; j < n; ++j) {
                q[j] = prec_t(k[j]) / prec_t(resolution);
                obj += q[j] * v[j];
            }
            if (obj < best && feasible(q)) best = obj;
            return;
        }
        for (int c = 0; c <= left; ++c) {
            k[i] = c;
            self(self, i + 1, left - c);
        }
    };
    visit(visit, 0, resolution);
    return best;
}

// ---------------------------------------------------------------------------
// robust Bellman residual for parametric sets
// ---------------------------------------------------------------------------

inline numvec robust_bellman_residual(const TabularMDP& mdp, const Policy& pi, const UncertaintySetSpec& spec,
                                      prec_t g, std::span<const prec_t> v) {
    return robust_bellman_residual(
        mdp, pi, [&](index_t s, index_t a, std::span<const prec_t> x) { return support_exact(spec, mdp.row(s, a), x).value; },
        g, v);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const UncertaintySetSpec& spec) {
    nlohmann::json j{{"kind", to_string(spec.kind())}, {"delta", spec.delta()}};
    if (const auto* w = std::get_if<Wasserstein>(&spec.variant())) {
        j["l"] = w->order;
        if (!w->metric.empty()) j["metric"] = w->metric;
    }
    return j;
}

inline UncertaintySetSpec spec_from_json(const nlohmann::json& j) {
    const SetKind kind = set_kind_from_string(j.at("kind").get<std::string>());
    const prec_t delta = j.at("delta").get<prec_t>();
    if (kind == SetKind::wasserstein) {
        const prec_t l = j.value("l", 1.0);
        std::vector<numvec> metric;
        if (j.contains("metric")) metric = j.at("metric").get<std::vector<numvec>>();
        return UncertaintySetSpec::wasserstein(delta, l, std::move(metric));
    }
    return UncertaintySetSpec::make(kind, delta);
}

} // namespace rarl
