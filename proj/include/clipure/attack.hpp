#pragma once

// White-box gradient attacks on the zero-shot pipeline: PGD, a lighter APGD
// variant (momentum + step halving + best-iterate tracking), expectation
// over transformation, and BPDA. The adaptive mode differentiates through
// the purification loop; BPDA treats it as identity in the backward pass.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/encoder.hpp"
#include "clipure/purifier.hpp"
#include "clipure/rng.hpp"
#include "clipure/tensor.hpp"
#include "clipure/zeroshot.hpp"

namespace clipure {

enum class AttackNorm { Linf, L2 };
enum class AttackMode { Direct, Adaptive, Bpda };

struct AttackConfig {
    AttackNorm norm = AttackNorm::Linf;
    double eps = 8.0 / 255.0;
    double alpha = 2.0 / 255.0;
    int iters = 40;
    double sigma = 0.0;  // Wiener-term scale; 0 keeps the attack deterministic
    int eot_samples = 1;
    AttackMode mode = AttackMode::Direct;
    std::uint64_t seed = 0;

    void validate() const {
        if (eps < 0) throw std::runtime_error("AttackConfig: eps must be >= 0");
        if (alpha <= 0) throw std::runtime_error("AttackConfig: alpha must be > 0");
        if (iters < 1) throw std::runtime_error("AttackConfig: iters must be >= 1");
        if (sigma < 0) throw std::runtime_error("AttackConfig: sigma must be >= 0");
        if (eot_samples < 1) throw std::runtime_error("AttackConfig: eot_samples must be >= 1");
    }
};

// The attacked pipeline: encoder [+ purifier] + zero-shot head.
template <typename T>
struct Pipeline {
    const DualEncoder<T>* encoder = nullptr;
    const ClassBank<T>* bank = nullptr;
    const PurifyConfig* purify_cfg = nullptr;  // null: undefended
    const DiffPrior<T>* prior = nullptr;

    bool stochastic() const {
        return purify_cfg && purify_cfg->steps > 0 && purify_cfg->variant == PurifyVariant::Diff;
    }

    Tensor<T> defended_embed(const Tensor<T>& z, std::uint64_t purify_seed) const {
        if (!purify_cfg || purify_cfg->steps == 0) return z;
        return purify_embed(z, *purify_cfg, *bank, prior, encoder->tau(), purify_seed);
    }

    // Untargeted cross-entropy over cosine scores / tau, on the tape.
    Tensor<T> loss(const Tensor<T>& x, int y_true, AttackMode mode, std::uint64_t purify_seed) const {
        Tensor<T> z = encoder->encode_image(x);
        if (purify_cfg && purify_cfg->steps > 0) {
            if (mode == AttackMode::Adaptive) {
                z = defended_embed(z, purify_seed);
            } else if (mode == AttackMode::Bpda) {
                // forward purifies, backward sees the identity
                std::vector<T> delta(z.size());
                {
                    NoGradGuard ng;
                    Tensor<T> z_pure = defended_embed(z.detach(), purify_seed);
                    for (std::size_t i = 0; i < delta.size(); ++i)
                        delta[i] = z_pure.data()[i] - z.data()[i];
                }
                z = add(z, Tensor<T>::vec(std::move(delta)));
            }
            // Direct mode ignores the purifier by definition.
        }
        const T inv_tau = static_cast<T>(1.0 / encoder->tau());
        std::vector<Tensor<T>> logits;
        logits.reserve(bank->class_embeddings.size());
        for (const auto& row : bank->class_embeddings)
            logits.push_back(scale(cosine(z, row), inv_tau));
        return sub(logsumexp(stack(logits)), logits[static_cast<std::size_t>(y_true)]);
    }

    // Defended forward prediction for evaluation.
    Classification<T> predict(const std::vector<T>& image, std::uint64_t purify_seed) const {
        NoGradGuard ng;
        Tensor<T> z = encoder->encode_image(Tensor<T>::vec(std::vector<T>(image)));
        return classify(defended_embed(z, purify_seed), *bank);
    }
};

template <typename T>
struct GradResult {
    double loss = 0;
    std::vector<T> grad;
};

template <typename T>
GradResult<T> attack_gradient(const Tensor<T>& x, int y_true, const Pipeline<T>& pipeline,
                              const AttackConfig& cfg, std::uint64_t purify_seed) {
    Tensor<T> leaf(x.shape(), x.data(), true);
    Tensor<T> loss = pipeline.loss(leaf, y_true, cfg.mode, purify_seed);
    backward(loss);
    return {static_cast<double>(loss.item()), leaf.grad()};
}

// Mean gradient over eot_samples independent draws of the pipeline's
// randomness.
template <typename T>
GradResult<T> eot_gradient(const Tensor<T>& x, int y_true, const Pipeline<T>& pipeline,
                           const AttackConfig& cfg, std::uint64_t base_seed) {
    GradResult<T> acc;
    acc.grad.assign(x.size(), T(0));
    for (int k = 0; k < cfg.eot_samples; ++k) {
        auto g = attack_gradient(x, y_true, pipeline, cfg,
                                 substream(base_seed, "eot", static_cast<std::uint64_t>(k)));
        acc.loss += g.loss;
        for (std::size_t i = 0; i < acc.grad.size(); ++i) acc.grad[i] += g.grad[i];
    }
    T inv = T(1) / static_cast<T>(cfg.eot_samples);
    acc.loss /= cfg.eot_samples;
    for (auto& v : acc.grad) v *= inv;
    return acc;
}

namespace detail {

template <typename T>
inline T sign0(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// Projection measured in double so the ball invariant holds exactly even
// for float pixels; the [0,1] clip only ever moves a pixel toward x0.
template <typename T>
void project_and_clip(std::vector<T>& x, const std::vector<T>& x0, const AttackConfig& cfg) {
    if (cfg.norm == AttackNorm::Linf) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double lo = static_cast<double>(x0[i]) - cfg.eps;
            double hi = static_cast<double>(x0[i]) + cfg.eps;
            x[i] = static_cast<T>(std::min(hi, std::max(lo, static_cast<double>(x[i]))));
            while (std::abs(static_cast<double>(x[i]) - static_cast<double>(x0[i])) > cfg.eps)
                x[i] = std::nextafter(x[i], x0[i]);
        }
    } else {
        for (int pass = 0; pass < 8; ++pass) {
            double d2 = 0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                double d = static_cast<double>(x[i]) - static_cast<double>(x0[i]);
                d2 += d * d;
            }
            double d = std::sqrt(d2);
            if (d <= cfg.eps || d == 0) break;
            double s = cfg.eps / d;
            if (pass > 0) s *= 1.0 - 1e-7;  // shave off accumulated rounding
            for (std::size_t i = 0; i < x.size(); ++i)
                x[i] = static_cast<T>(static_cast<double>(x0[i]) +
                                      s * (static_cast<double>(x[i]) - static_cast<double>(x0[i])));
        }
    }
    for (auto& v : x) v = std::min(T(1), std::max(T(0), v));
}

template <typename T>
std::vector<T> attack_step(const std::vector<T>& grad, const AttackConfig& cfg) {
    std::vector<T> step(grad.size());
    if (cfg.norm == AttackNorm::Linf) {
        for (std::size_t i = 0; i < grad.size(); ++i)
            step[i] = static_cast<T>(cfg.alpha) * sign0(grad[i]);
    } else {
        double n2 = 0;
        for (T g : grad) n2 += static_cast<double>(g) * static_cast<double>(g);
        double n = std::sqrt(n2);
        if (n < kNormEps) return std::vector<T>(grad.size(), T(0));
        for (std::size_t i = 0; i < grad.size(); ++i)
            step[i] = static_cast<T>(cfg.alpha / n) * grad[i];
    }
    return step;
}

}  // namespace detail

// Projected gradient ascent on the attack loss. `sample_seed` scopes all
// randomness (noise term, EOT draws, stochastic purifier timesteps) to one
// sample.
template <typename T>
std::vector<T> pgd(const std::vector<T>& x0, int y_true, const Pipeline<T>& pipeline,
                   const AttackConfig& cfg, std::uint64_t sample_seed,
                   std::vector<double>* loss_log = nullptr) {
    cfg.validate();
    std::vector<T> x = x0;
    if (cfg.eps == 0) return x;
    Rng noise_rng(sample_seed, "attack-noise");
    for (int t = 0; t < cfg.iters; ++t) {
        GradResult<T> g;
        try {
            Tensor<T> xt = Tensor<T>::vec(std::vector<T>(x));
            std::uint64_t step_seed = substream(sample_seed, "attack-step", static_cast<std::uint64_t>(t));
            g = cfg.eot_samples > 1 ? eot_gradient(xt, y_true, pipeline, cfg, step_seed)
                                    : attack_gradient(xt, y_true, pipeline, cfg, step_seed);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (attack step " + std::to_string(t) + ")");
        }
        if (loss_log) loss_log->push_back(g.loss);
        auto step = detail::attack_step(g.grad, cfg);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += step[i];
            if (cfg.sigma > 0) x[i] += static_cast<T>(noise_rng.gaussian(0.0, cfg.sigma));
        }
        detail::project_and_clip(x, x0, cfg);
    }
    return x;
}

// PGD plus momentum 0.75, step halving when the best loss stalls for
// ceil(0.22 * T) steps (down to alpha/64), returning the best iterate.
template <typename T>
std::vector<T> apgd_lite(const std::vector<T>& x0, int y_true, const Pipeline<T>& pipeline,
                         const AttackConfig& cfg, std::uint64_t sample_seed,
                         std::vector<double>* loss_log = nullptr) {
    cfg.validate();
    if (cfg.eps == 0) return x0;
    const double momentum = 0.75;
    const int patience = static_cast<int>(std::ceil(0.22 * cfg.iters));
    const double alpha_min = cfg.alpha / 64.0;

    std::vector<T> x = x0;
    std::vector<T> best_x = x0;
    std::vector<T> velocity(x0.size(), T(0));
    double best_loss = -std::numeric_limits<double>::infinity();
    double alpha = cfg.alpha;
    int stall = 0;
    Rng noise_rng(sample_seed, "attack-noise");

    AttackConfig step_cfg = cfg;
    for (int t = 0; t < cfg.iters; ++t) {
        step_cfg.alpha = alpha;
        Tensor<T> xt = Tensor<T>::vec(std::vector<T>(x));
        std::uint64_t step_seed = substream(sample_seed, "attack-step", static_cast<std::uint64_t>(t));
        GradResult<T> g = cfg.eot_samples > 1
                              ? eot_gradient(xt, y_true, pipeline, step_cfg, step_seed)
                              : attack_gradient(xt, y_true, pipeline, step_cfg, step_seed);
        if (loss_log) loss_log->push_back(g.loss);
        if (g.loss > best_loss) {
            best_loss = g.loss;
            best_x = x;
            stall = 0;
        } else if (++stall >= patience) {
            stall = 0;
            if (alpha > alpha_min) alpha = std::max(alpha_min, alpha / 2.0);
            x = best_x;  // restart from the best point with the smaller step
            std::fill(velocity.begin(), velocity.end(), T(0));
            continue;
        }
        auto step = detail::attack_step(g.grad, step_cfg);
        for (std::size_t i = 0; i < x.size(); ++i) {
            velocity[i] = static_cast<T>(momentum) * velocity[i] + step[i];
            x[i] += velocity[i];
            if (cfg.sigma > 0) x[i] += static_cast<T>(noise_rng.gaussian(0.0, cfg.sigma));
        }
        detail::project_and_clip(x, x0, cfg);
    }
    // final candidate counts too
    {
        NoGradGuard ng;
        Tensor<T> xt = Tensor<T>::vec(std::vector<T>(x));
        double l = static_cast<double>(
            pipeline.loss(xt, y_true, cfg.mode, substream(sample_seed, "attack-step", cfg.iters))
                .item());
        if (l > best_loss) best_x = x;
    }
    return best_x;
}

// Ball invariant: ||x_adv - x0||_rho <= eps + 1e-9 and pixels in [0,1].
template <typename T>
bool ball_invariant(const std::vector<T>& x_adv, const std::vector<T>& x0, const AttackConfig& cfg) {
    double dist = 0;
    for (std::size_t i = 0; i < x_adv.size(); ++i) {
        double v = static_cast<double>(x_adv[i]);
        if (v < 0.0 || v > 1.0) return false;
        double d = std::abs(v - static_cast<double>(x0[i]));
        if (cfg.norm == AttackNorm::Linf)
            dist = std::max(dist, d);
        else
            dist += d * d;
    }
    if (cfg.norm == AttackNorm::L2) dist = std::sqrt(dist);
    return dist <= cfg.eps + 1e-9;
}

}  // namespace clipure
