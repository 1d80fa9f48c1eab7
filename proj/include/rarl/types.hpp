#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rarl {

/// Floating point type used throughout the library
using prec_t = double;
/// Dense real vector
using numvec = std::vector<prec_t>;
/// Relative value function over states
using ValueFn = numvec;
/// Index of a state or an action
using index_t = std::size_t;

/// Default random engine; every run owns one
using Rng = std::mt19937_64;

/// Tolerance for probability rows summing to one
constexpr prec_t SIMPLEX_TOL = 1e-9;
/// Transition probabilities below this are treated as zero in graph checks
constexpr prec_t SUPPORT_EPS = 1e-12;

/// Raised when an iterative method stops without meeting its tolerance
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, prec_t residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    prec_t residual() const noexcept { return residual_; }

private:
    prec_t residual_;
};

/// Raised when a learner's iterates leave the finite or bounded range
class divergence_error : public std::runtime_error {
public:
    divergence_error(const std::string& what, std::size_t iteration)
        : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
          iteration_(iteration) {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Raised when a chain has more than one recurrent class
class multichain_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline prec_t dot(std::span<const prec_t> x, std::span<const prec_t> y) {
    prec_t r = 0;
    for (std::size_t i = 0; i < x.size(); ++i) r += x[i] * y[i];
    return r;
}

/// Sup norm
inline prec_t norm_inf(std::span<const prec_t> x) {
    prec_t r = 0;
    for (prec_t v : x) r = std::max(r, std::abs(v));
    return r;
}

inline prec_t min_of(std::span<const prec_t> x) {
    prec_t r = std::numeric_limits<prec_t>::infinity();
    for (prec_t v : x) r = std::min(r, v);
    return r;
}

inline prec_t max_of(std::span<const prec_t> x) {
    prec_t r = -std::numeric_limits<prec_t>::infinity();
    for (prec_t v : x) r = std::max(r, v);
    return r;
}

/// Span seminorm: max(v) - min(v)
inline prec_t span(std::span<const prec_t> v) {
    if (v.empty()) return 0;
    return max_of(v) - min_of(v);
}

inline bool all_finite(std::span<const prec_t> x) {
    for (prec_t v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace rarl
