#pragma once

// Latent-space purification: split the image embedding into direction and
// magnitude, run likelihood ascent on the direction (cosine-to-blank or
// diffusion ELBO), restore the magnitude. Every step is written out of tape
// primitives so an adaptive attacker can differentiate through the whole
// loop.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "clipure/diffprior.hpp"
#include "clipure/rng.hpp"
#include "clipure/tensor.hpp"
#include "clipure/zeroshot.hpp"

namespace clipure {

enum class PurifyVariant { Cos, Diff };

struct PurifyConfig {
    PurifyVariant variant = PurifyVariant::Cos;
    int steps = 10;
    double eta = 30.0;
    int t_lo = 90;  // top 10% of the toy schedule
    int t_hi = 100;
    double guidance_weight = 0.0;
    int guidance_start = 5;
    std::uint64_t seed = 0;
    bool literal_polar = false;  // u = z/||z||^2, r = ||z||^2, no renormalization

    void validate(int schedule_steps = -1) const {
        if (steps < 0) throw std::runtime_error("PurifyConfig: steps must be >= 0");
        if (eta < 0) throw std::runtime_error("PurifyConfig: eta must be >= 0");
        if (guidance_weight < 0) throw std::runtime_error("PurifyConfig: guidance weight must be >= 0");
        if (variant == PurifyVariant::Diff) {
            if (t_lo < 1 || t_lo > t_hi) throw std::runtime_error("PurifyConfig: bad timestep range");
            if (schedule_steps > 0 && t_hi > schedule_steps)
                throw std::runtime_error("PurifyConfig: t_hi beyond the prior's schedule");
        }
    }
};

template <typename T>
struct PolarEmbedding {
    Tensor<T> direction;  // unit vector
    T magnitude = 0;
};

template <typename T>
PolarEmbedding<T> to_polar(const Tensor<T>& z) {
    PolarEmbedding<T> p;
    p.magnitude = l2norm(z.detach()).item();
    p.direction = normalize(z.detach());
    return p;
}

template <typename T>
Tensor<T> loglik_cos(const Tensor<T>& z, const Tensor<T>& blank) {
    return cosine(z, blank);
}

// Single-draw Monte-Carlo estimate of the diffusion ELBO at timestep t.
template <typename T>
Tensor<T> loglik_diff(const Tensor<T>& z, const Tensor<T>& blank, int t, const DiffPrior<T>& prior,
                      std::uint64_t noise_seed) {
    if (!prior.trained()) throw std::runtime_error("loglik_diff: prior is untrained");
    Rng rng(noise_seed, "loglik-diff");
    Tensor<T> eps = Tensor<T>::vec(rng.template gaussian_vec<T>(z.size()));
    Tensor<T> z_t = diffuse(z, t, eps, prior.schedule());
    Tensor<T> r = sub(prior.predict(z_t, t, blank), eps);
    return neg(dot(r, r));
}

namespace detail {

// d(log p)/dz as a tape expression.
template <typename T>
Tensor<T> loglik_grad_expr(const Tensor<T>& z, const PurifyConfig& cfg, const Tensor<T>& blank,
                           const DiffPrior<T>* prior, Rng& draw_rng) {
    if (cfg.variant == PurifyVariant::Cos) {
        // d cos(z, b)/dz = (b_hat - cos * z_hat) / ||z||
        Tensor<T> nz = l2norm(z);
        Tensor<T> zhat = sdiv(z, nz);
        Tensor<T> bhat = normalize(blank.detach());
        Tensor<T> c = cosine(z, blank);
        return sdiv(sub(bhat, smul(zhat, c)), nz);
    }
    if (!prior) throw std::runtime_error("purify: diff variant needs a prior");
    if (!prior->trained()) throw std::runtime_error("purify: prior is untrained");
    int t = draw_rng.uniform_int(cfg.t_lo, cfg.t_hi);
    Tensor<T> eps = Tensor<T>::vec(draw_rng.template gaussian_vec<T>(z.size()));
    Tensor<T> z_t = diffuse(z, t, eps, prior->schedule());
    double ab = prior->schedule().at(t);
    Tensor<T> cond = prior->cond_dim() > 0 ? blank.detach() : Tensor<T>();
    return scale(prior->sq_error_grad(z_t, t, eps, cond), static_cast<T>(-std::sqrt(ab)));
}

// d(log p(y_hat | z))/dz for the classifier-guidance term, analytic.
template <typename T>
Tensor<T> guidance_grad_expr(const Tensor<T>& z, const ClassBank<T>& bank, int y_hat, double tau) {
    const T inv_tau = static_cast<T>(1.0 / tau);
    Tensor<T> nz = l2norm(z);
    Tensor<T> zhat = sdiv(z, nz);
    const std::size_t k = bank.class_embeddings.size();
    std::vector<Tensor<T>> cos_c, dcos_c, logits;
    cos_c.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        Tensor<T> cc = cosine(z, bank.class_embeddings[c]);
        cos_c.push_back(cc);
        Tensor<T> bhat = normalize(bank.class_embeddings[c].detach());
        dcos_c.push_back(sdiv(sub(bhat, smul(zhat, cc)), nz));
        logits.push_back(scale(cc, inv_tau));
    }
    Tensor<T> lse = logsumexp(stack(logits));
    Tensor<T> g = dcos_c[static_cast<std::size_t>(y_hat)];
    for (std::size_t c = 0; c < k; ++c) {
        Tensor<T> w = exp_(sub(logits[c], lse));  // softmax weight
        g = sub(g, smul(dcos_c[c], w));
    }
    return scale(g, inv_tau);
}

}  // namespace detail

struct PurifyTraceRow {
    int step = 0;
    double cos_to_blank = 0;
    int predicted = -1;
};

// Full purification of one embedding, built on the tape. The guidance term
// is only evaluated when its weight is positive, so weight 0 takes exactly
// the unguided path.
template <typename T>
Tensor<T> purify_embed(const Tensor<T>& z, const PurifyConfig& cfg, const ClassBank<T>& bank,
                       const DiffPrior<T>* prior = nullptr, double tau = 0.07,
                       std::uint64_t seed_override = UINT64_MAX,
                       std::vector<PurifyTraceRow>* trace = nullptr) {
    cfg.validate(prior ? prior->schedule().total_steps : -1);
    if (cfg.steps == 0) return z;
    std::uint64_t seed = seed_override == UINT64_MAX ? cfg.seed : seed_override;
    Rng draw_rng(seed, "purify-draws");

    Tensor<T> r = cfg.literal_polar ? smul(l2norm(z), l2norm(z)) : l2norm(z);
    Tensor<T> u = sdiv(z, r);

    for (int step = 0; step < cfg.steps; ++step) {
        Tensor<T> zi = smul(u, r);
        Tensor<T> g_z = detail::loglik_grad_expr(zi, cfg, bank.blank_embedding, prior, draw_rng);
        if (cfg.guidance_weight > 0 && step >= cfg.guidance_start) {
            int y_hat = classify(zi, bank).label;  // prediction as the label proxy
            Tensor<T> g_guid = detail::guidance_grad_expr(zi, bank, y_hat, tau);
            g_z = add(g_z, scale(g_guid, static_cast<T>(cfg.guidance_weight)));
        }
        Tensor<T> g_u = smul(g_z, r);  // chain rule through z = r*u
        Tensor<T> stepped = add(u, scale(g_u, static_cast<T>(cfg.eta)));
        u = cfg.literal_polar ? stepped : normalize(stepped);
        if (trace) {
            auto cls = classify(smul(u, r), bank);
            double cb;
            {
                NoGradGuard ng;
                cb = static_cast<double>(cosine(u.detach(), bank.blank_embedding.detach()).item());
            }
            trace->push_back({step, cb, cls.label});
        }
    }
    return smul(u, r);
}

// One public step on an explicit polar decomposition.
template <typename T>
PolarEmbedding<T> purify_step(const PolarEmbedding<T>& polar, const PurifyConfig& cfg,
                              const ClassBank<T>& bank, const DiffPrior<T>* prior = nullptr,
                              double tau = 0.07, std::uint64_t seed = 0) {
    PurifyConfig one = cfg;
    one.steps = 1;
    one.guidance_weight = 0;
    NoGradGuard ng;
    Tensor<T> z = scale(polar.direction.detach(), polar.magnitude);
    Tensor<T> z_pure = purify_embed(z, one, bank, prior, tau, seed);
    PolarEmbedding<T> out;
    out.direction = normalize(z_pure);
    out.magnitude = polar.magnitude;
    return out;
}

template <typename T>
Tensor<T> purify(const Tensor<T>& z, const PurifyConfig& cfg, const ClassBank<T>& bank,
                 const DiffPrior<T>* prior = nullptr, std::uint64_t seed_override = UINT64_MAX) {
    PurifyConfig unguided = cfg;
    unguided.guidance_weight = 0;
    return purify_embed(z, unguided, bank, prior, 0.07, seed_override);
}

template <typename T>
Tensor<T> purify_guided(const Tensor<T>& z, const PurifyConfig& cfg, const ClassBank<T>& bank,
                        double tau, const DiffPrior<T>* prior = nullptr,
                        std::uint64_t seed_override = UINT64_MAX) {
    if (cfg.guidance_weight > 0 && cfg.guidance_start >= cfg.steps && cfg.steps > 0) {
        // guidance never kicks in; identical to unguided purification
        return purify(z, cfg, bank, prior, seed_override);
    }
    return purify_embed(z, cfg, bank, prior, tau, seed_override);
}

}  // namespace clipure
