#pragma once

// Numerical diagnostics for the purification-risk lower bound: a smoothed
// histogram KL between benign and adversarial score populations, plus the
// gradient-norm term, assembled into a RiskReport.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/rng.hpp"
#include "clipure/tensor.hpp"

namespace clipure {

struct ScoreSet {
    std::string label;      // "ben" | "adv"
    std::string estimator;  // "pixel-elbo" | "latent-diff-elbo" | "latent-cos"
    std::vector<double> scores;

    void check() const {
        if (scores.empty()) throw std::runtime_error("ScoreSet: empty");
        for (double s : scores)
            if (!std::isfinite(s)) throw std::runtime_error("ScoreSet: non-finite score");
    }
};

struct HistogramPair {
    std::vector<double> edges;  // bins + 1
    std::vector<int> counts_adv, counts_ben;
};

namespace detail {

inline double percentile(std::vector<double> sorted, double q) {
    if (sorted.empty()) throw std::runtime_error("percentile of empty set");
    double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

inline std::vector<int> bin_counts(const std::vector<double>& xs, const std::vector<double>& edges) {
    std::vector<int> counts(edges.size() - 1, 0);
    for (double x : xs) {
        auto it = std::upper_bound(edges.begin(), edges.end(), x);
        std::size_t idx;
        if (it == edges.begin())
            idx = 0;
        else if (it == edges.end())
            idx = counts.size() - 1;
        else
            idx = static_cast<std::size_t>(it - edges.begin()) - 1;
        idx = std::min(idx, counts.size() - 1);
        counts[idx]++;
    }
    return counts;
}

}  // namespace detail

// Shared bin edges over the pooled 0.1-99.9 percentile range of both sets.
inline std::vector<double> shared_edges(const std::vector<double>& a, const std::vector<double>& b,
                                        int bins) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    double lo = detail::percentile(pooled, 0.001);
    double hi = detail::percentile(pooled, 0.999);
    if (hi <= lo) hi = lo + 1e-12;
    std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i)
        edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
    return edges;
}

// KL(p_adv || p_ben) from shared-bin histograms with add-one smoothing:
// p(b) = (count_b + 1) / (n + B).
inline double kl_histogram(const ScoreSet& adv, const ScoreSet& ben, int bins = 64,
                           HistogramPair* hist_out = nullptr) {
    adv.check();
    ben.check();
    if (bins < 2) throw std::runtime_error("kl_histogram: need at least 2 bins");
    auto edges = shared_edges(adv.scores, ben.scores, bins);
    auto ca = detail::bin_counts(adv.scores, edges);
    auto cb = detail::bin_counts(ben.scores, edges);
    double na = static_cast<double>(adv.scores.size());
    double nb = static_cast<double>(ben.scores.size());
    double kl = 0;
    for (int b = 0; b < bins; ++b) {
        double pa = (ca[static_cast<std::size_t>(b)] + 1.0) / (na + bins);
        double pb = (cb[static_cast<std::size_t>(b)] + 1.0) / (nb + bins);
        kl += pa * std::log(pa / pb);
    }
    if (hist_out) *hist_out = {edges, ca, cb};
    return kl;
}

// First term of the bound: (1/2) E[ ||grad score||^2 sigma^2 dt ] over the
// adversarial samples.
template <typename T>
double grad_norm_term(const std::vector<std::vector<T>>& samples,
                      const std::function<Tensor<T>(const Tensor<T>&)>& score_fn, double sigma,
                      double dt) {
    if (samples.empty()) throw std::runtime_error("grad_norm_term: no samples");
    if (sigma < 0 || dt <= 0) throw std::runtime_error("grad_norm_term: sigma >= 0, dt > 0 required");
    double acc = 0;
    for (const auto& s : samples) {
        Tensor<T> x(std::vector<int>{static_cast<int>(s.size())}, std::vector<T>(s), true);
        Tensor<T> score = score_fn(x);
        backward(score);
        double n2 = 0;
        for (T g : x.grad()) n2 += static_cast<double>(g) * static_cast<double>(g);
        acc += 0.5 * n2 * sigma * sigma * dt;
    }
    return acc / static_cast<double>(samples.size());
}

struct RiskReport {
    std::string estimator;
    double grad_norm_term = 0;
    double kl_term = 0;
    double lower_bound = 0;
    double sigma = 0;
    double dt = 0;
    std::size_t n_adv = 0, n_ben = 0;
    HistogramPair histograms;

    void check() const {
        if (kl_term < -1e-9) throw std::runtime_error("RiskReport: KL must be non-negative");
    }
};

template <typename T>
RiskReport risk_report(const std::string& estimator, const ScoreSet& adv, const ScoreSet& ben,
                       const std::vector<std::vector<T>>& adv_inputs,
                       const std::function<Tensor<T>(const Tensor<T>&)>& score_fn, double sigma,
                       double dt, int bins = 64) {
    RiskReport r;
    r.estimator = estimator;
    r.sigma = sigma;
    r.dt = dt;
    r.n_adv = adv.scores.size();
    r.n_ben = ben.scores.size();
    r.kl_term = kl_histogram(adv, ben, bins, &r.histograms);
    r.grad_norm_term = sigma == 0 ? 0.0 : grad_norm_term<T>(adv_inputs, score_fn, sigma, dt);
    r.lower_bound = r.grad_norm_term - r.kl_term;
    r.check();
    return r;
}

// Bootstrap confidence that kl(a) > kl(b) when both are recomputed on
// resampled score populations. Returns the fraction of resamples where the
// ordering holds.
inline double bootstrap_ordering_confidence(const ScoreSet& adv_a, const ScoreSet& ben_a,
                                            const ScoreSet& adv_b, const ScoreSet& ben_b,
                                            int resamples = 10, int bins = 64,
                                            std::uint64_t seed = 1234) {
    Rng rng(seed, "bootstrap");
    auto resample = [&](const ScoreSet& s) {
        ScoreSet out = s;
        for (auto& v : out.scores) {
            int idx = rng.uniform_int(0, static_cast<int>(s.scores.size()) - 1);
            v = s.scores[static_cast<std::size_t>(idx)];
        }
        return out;
    };
    int wins = 0;
    for (int i = 0; i < resamples; ++i) {
        double ka = kl_histogram(resample(adv_a), resample(ben_a), bins);
        double kb = kl_histogram(resample(adv_b), resample(ben_b), bins);
        if (ka > kb) ++wins;
    }
    return static_cast<double>(wins) / resamples;
}

}  // namespace clipure
