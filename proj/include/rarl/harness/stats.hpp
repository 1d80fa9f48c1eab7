#pragma once

#include "rarl/types.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

namespace rarl::harness {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/**
 * Seed of the RNG stream for run `index` of an experiment:
 * splitmix64(splitmix64(base_seed) + index). A stream depends only on
 * (base_seed, index), so adding seeds never changes earlier runs.
 */
inline std::uint64_t stream_seed(std::uint64_t base_seed, std::uint64_t index) {
    return splitmix64(splitmix64(base_seed) + index);
}

/// Nearest-rank percentile (pct in (0, 100]) of an unsorted sample
inline prec_t percentile(numvec sample, prec_t pct) {
    if (sample.empty()) throw std::invalid_argument("percentile of an empty sample");
    std::sort(sample.begin(), sample.end());
    const auto n = prec_t(sample.size());
    auto rank = std::size_t(std::ceil(pct / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sample.size());
    return sample[rank - 1];
}

inline prec_t mean(std::span<const prec_t> x) {
    prec_t s = 0;
    for (prec_t v : x) s += v;
    return s / prec_t(x.size());
}

/// Unbiased sample variance
inline prec_t variance(std::span<const prec_t> x) {
    const prec_t m = mean(x);
    prec_t s = 0;
    for (prec_t v : x) s += (v - m) * (v - m);
    return s / prec_t(x.size() - 1);
}

inline prec_t standard_error(std::span<const prec_t> x) { return std::sqrt(variance(x) / prec_t(x.size())); }

/// Per-column envelope of equally long curves
struct Envelope {
    numvec mean, p95, p05;
};

inline Envelope envelope(const std::vector<numvec>& curves) {
    if (curves.empty()) throw std::invalid_argument("no curves");
    const std::size_t len = curves.front().size();
    Envelope e{numvec(len), numvec(len), numvec(len)};
    numvec column(curves.size());
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t c = 0; c < curves.size(); ++c) column[c] = curves[c].at(i);
        e.mean[i] = mean(column);
        e.p95[i] = percentile(column, 95.0);
        e.p05[i] = percentile(column, 5.0);
    }
    return e;
}

/// Most frequent element; ties go to the smallest
template <class T>
T mode(const std::vector<T>& values) {
    std::map<T, std::size_t> counts;
    for (const auto& v : values) ++counts[v];
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

/**
 * Runs task(i) for i in [0, n) on `jobs` worker threads. Results are stored
 * by index; an exception in one task is captured as that task's error.
 */
template <class R>
struct TaskResult {
    std::optional<R> value;
    std::string error;
};

template <class R>
std::vector<TaskResult<R>> parallel_map(std::size_t n, std::size_t jobs, const std::function<R(std::size_t)>& task) {
    std::vector<TaskResult<R>> out(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i].value = task(i);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

} // namespace rarl::harness
