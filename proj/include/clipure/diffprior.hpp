#pragma once

// Toy diffusion prior over embedding vectors: a residual MLP noise
// predictor conditioned on a timestep embedding and (optionally) the blank
// text embedding. Also instantiated over flattened images as the pixel twin
// for the likelihood-separation comparison.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/checkpoint.hpp"
#include "clipure/rng.hpp"
#include "clipure/tensor.hpp"

namespace clipure {

struct NoiseSchedule {
    int total_steps = 100;
    std::vector<double> alpha_bar;  // size total_steps + 1, alpha_bar[0] = 1

    static NoiseSchedule cosine(int total_steps = 100) {
        if (total_steps < 1) throw std::runtime_error("NoiseSchedule: total_steps must be >= 1");
        NoiseSchedule s;
        s.total_steps = total_steps;
        const double eps = 0.008;
        auto f = [&](double t) {
            double v = std::cos((t / total_steps + eps) / (1.0 + eps) * M_PI / 2.0);
            return v * v;
        };
        double f0 = f(0.0);
        s.alpha_bar.resize(static_cast<std::size_t>(total_steps) + 1);
        for (int t = 0; t <= total_steps; ++t)
            s.alpha_bar[static_cast<std::size_t>(t)] = f(static_cast<double>(t)) / f0;
        s.alpha_bar[0] = 1.0;
        return s;
    }

    double at(int t) const {
        if (t < 0 || t > total_steps)
            throw std::runtime_error("NoiseSchedule: timestep " + std::to_string(t) + " out of range");
        return alpha_bar[static_cast<std::size_t>(t)];
    }
};

// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps
template <typename T>
Tensor<T> diffuse(const Tensor<T>& z0, int t, const Tensor<T>& eps, const NoiseSchedule& sched) {
    if (z0.shape() != eps.shape()) throw ShapeError("diffuse: z0/eps shape mismatch");
    double ab = sched.at(t);
    return add(scale(z0, static_cast<T>(std::sqrt(ab))),
               scale(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

inline constexpr int kTimeEmbedDim = 8;

template <typename T>
class DiffPrior {
public:
    DiffPrior() = default;

    DiffPrior(int data_dim, int cond_dim, int hidden, const NoiseSchedule& sched,
              std::uint64_t seed)
        : data_dim_(data_dim), cond_dim_(cond_dim), hidden_(hidden), sched_(sched) {
        Rng rng(seed, "prior-init");
        int in_dim = data_dim + kTimeEmbedDim + cond_dim;
        w1_ = init_matrix(rng, hidden, in_dim);
        b1_ = Tensor<T>::zeros({hidden}, true);
        w2_ = init_matrix(rng, hidden, hidden);
        b2_ = Tensor<T>::zeros({hidden}, true);
        w3_ = init_matrix(rng, data_dim, hidden);
        b3_ = Tensor<T>::zeros({data_dim}, true);
        trained_ = false;
    }

    int data_dim() const { return data_dim_; }
    int cond_dim() const { return cond_dim_; }
    const NoiseSchedule& schedule() const { return sched_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    Tensor<T> time_embedding(int t) const {
        double tau = static_cast<double>(t) / sched_.total_steps;
        std::vector<T> e(kTimeEmbedDim);
        for (int k = 0; k < kTimeEmbedDim / 2; ++k) {
            double w = std::pow(2.0, k) * M_PI;
            e[static_cast<std::size_t>(2 * k)] = static_cast<T>(std::sin(w * tau));
            e[static_cast<std::size_t>(2 * k + 1)] = static_cast<T>(std::cos(w * tau));
        }
        return Tensor<T>::vec(std::move(e));
    }

    // eps_theta(z_t, t, cond); differentiable w.r.t. z_t and the parameters.
    Tensor<T> predict(const Tensor<T>& z_t, int t, const Tensor<T>& cond) const {
        Tensor<T> in = assemble_input(z_t, t, cond);
        Tensor<T> h1 = relu(add(matvec(w1_, in), b1_));
        Tensor<T> h2 = add(relu(add(matvec(w2_, h1), b2_)), h1);
        return add(matvec(w3_, h2), b3_);
    }

    // d/dz_t of ||eps_theta(z_t,t,cond) - eps||^2, written out of primitives
    // with the relu masks held constant, so it can itself sit on a tape
    // (the adaptive attack differentiates through it).
    Tensor<T> sq_error_grad(const Tensor<T>& z_t, int t, const Tensor<T>& eps,
                            const Tensor<T>& cond) const {
        Tensor<T> in = assemble_input(z_t, t, cond);
        Tensor<T> pre1 = add(matvec(w1_, in), b1_);
        Tensor<T> h1 = relu(pre1);
        Tensor<T> pre2 = add(matvec(w2_, h1), b2_);
        Tensor<T> h2 = add(relu(pre2), h1);
        Tensor<T> out = add(matvec(w3_, h2), b3_);

        Tensor<T> v = scale(sub(out, eps), T(2));  // d/d(out)
        Tensor<T> g_h2 = matvec_t(w3_, v);
        Tensor<T> g_h1 = add(matvec_t(w2_, mul(step_mask(pre2), g_h2)), g_h2);
        Tensor<T> g_in = matvec_t(w1_, mul(step_mask(pre1), g_h1));
        return slice(g_in, 0, data_dim_);
    }

    std::vector<Tensor<T>*> params() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}; }

    // Inference view with untracked parameters; safe to share across
    // threads that each run their own backward pass.
    DiffPrior frozen() const {
        DiffPrior c = *this;
        auto cut = [](Tensor<T>& t) { t = Tensor<T>(t.shape(), t.data(), false); };
        cut(c.w1_);
        cut(c.b1_);
        cut(c.w2_);
        cut(c.b2_);
        cut(c.w3_);
        cut(c.b3_);
        return c;
    }

    void save(const std::string& path) const {
        Checkpoint<T> ck;
        ck.magic = "PRIR";
        ck.dim = static_cast<std::uint32_t>(data_dim_);
        ck.add("meta", Tensor<T>::vec({static_cast<T>(cond_dim_), static_cast<T>(hidden_),
                                       static_cast<T>(sched_.total_steps),
                                       static_cast<T>(trained_ ? 1 : 0)}));
        ck.add("w1", w1_);
        ck.add("b1", b1_);
        ck.add("w2", w2_);
        ck.add("b2", b2_);
        ck.add("w3", w3_);
        ck.add("b3", b3_);
        ck.save(path);
    }

    static DiffPrior load(const std::string& path) {
        auto ck = Checkpoint<T>::load(path, "PRIR");
        DiffPrior p;
        const auto& meta = ck.get("meta").data();
        p.data_dim_ = static_cast<int>(ck.dim);
        p.cond_dim_ = static_cast<int>(meta[0]);
        p.hidden_ = static_cast<int>(meta[1]);
        p.sched_ = NoiseSchedule::cosine(static_cast<int>(meta[2]));
        p.trained_ = meta[3] > T(0.5);
        auto as_param = [](const Tensor<T>& t) { return Tensor<T>(t.shape(), t.data(), true); };
        p.w1_ = as_param(ck.get("w1"));
        p.b1_ = as_param(ck.get("b1"));
        p.w2_ = as_param(ck.get("w2"));
        p.b2_ = as_param(ck.get("b2"));
        p.w3_ = as_param(ck.get("w3"));
        p.b3_ = as_param(ck.get("b3"));
        return p;
    }

private:
    Tensor<T> assemble_input(const Tensor<T>& z_t, int t, const Tensor<T>& cond) const {
        if (z_t.ndim() != 1 || z_t.dim(0) != data_dim_)
            throw ShapeError("DiffPrior: z_t has wrong dimension");
        std::vector<Tensor<T>> parts = {z_t, time_embedding(t)};
        if (cond_dim_ > 0) {
            if (cond.ndim() != 1 || cond.dim(0) != cond_dim_)
                throw ShapeError("DiffPrior: condition has wrong dimension");
            parts.push_back(cond);
        }
        return concat(parts);
    }

    static Tensor<T> init_matrix(Rng& rng, int rows, int cols) {
        double s = std::sqrt(6.0 / (rows + cols));
        std::vector<T> data(static_cast<std::size_t>(rows) * cols);
        for (auto& v : data) v = static_cast<T>(rng.uniform(-s, s));
        return Tensor<T>({rows, cols}, std::move(data), true);
    }

    int data_dim_ = 0, cond_dim_ = 0, hidden_ = 0;
    bool trained_ = false;
    NoiseSchedule sched_;
    Tensor<T> w1_, b1_, w2_, b2_, w3_, b3_;
};

struct PriorTrainConfig {
    int epochs = 30;
    int batch = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 17;
};

// Denoising-loss training over a corpus of vectors; `cond` is the fixed
// conditioning embedding (pass an empty tensor for the unconditioned twin).
template <typename T>
std::vector<double> train_prior(DiffPrior<T>& prior, const std::vector<std::vector<T>>& corpus,
                                const Tensor<T>& cond, const PriorTrainConfig& cfg) {
    if (corpus.empty()) throw std::runtime_error("train_prior: empty corpus");
    auto params = prior.params();
    std::vector<std::vector<T>> velocity(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) velocity[p].assign(params[p]->size(), T(0));

    std::vector<double> curve;
    Rng rng(cfg.seed, "prior-train");
    const auto& sched = prior.schedule();
    const int n = static_cast<int>(corpus.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_sum = 0;
        int batches = 0;
        for (int start = 0; start < n; start += cfg.batch) {
            int end = std::min(n, start + cfg.batch);
            std::vector<Tensor<T>> losses;
            for (int s = start; s < end; ++s) {
                const auto& row = corpus[static_cast<std::size_t>(order[static_cast<std::size_t>(s)])];
                Tensor<T> z0 = Tensor<T>::vec(std::vector<T>(row.begin(), row.end()));
                int t = rng.uniform_int(1, sched.total_steps);
                Tensor<T> eps = Tensor<T>::vec(rng.template gaussian_vec<T>(row.size()));
                Tensor<T> z_t = diffuse(z0, t, eps, sched);
                Tensor<T> r = sub(prior.predict(z_t, t, cond), eps);
                // per-dimension MSE keeps the loss scale (and a usable lr)
                // independent of data_dim
                losses.push_back(scale(dot(r, r), T(1) / static_cast<T>(prior.data_dim())));
            }
            Tensor<T> loss = mean(stack(losses));
            for (auto* p : params) p->zero_grad();
            backward(loss);
            for (std::size_t p = 0; p < params.size(); ++p) {
                const auto& g = params[p]->grad();
                auto& w = params[p]->mutable_data();
                auto& vel = velocity[p];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    vel[i] = static_cast<T>(cfg.momentum) * vel[i] - static_cast<T>(cfg.lr) * g[i];
                    w[i] += vel[i];
                }
            }
            epoch_sum += static_cast<double>(loss.item());
            ++batches;
        }
        curve.push_back(batches ? epoch_sum / batches : 0.0);
    }
    prior.mark_trained();
    return curve;
}

// Monte-Carlo ELBO proxy: mean over draws of -||eps_theta(z_t,t,cond)-eps||^2
// with t uniform in [t_lo, t_hi]. Differentiable w.r.t. z.
template <typename T>
Tensor<T> elbo_score(const Tensor<T>& z, const DiffPrior<T>& prior, const Tensor<T>& cond,
                     int t_lo, int t_hi, int n_samples, std::uint64_t seed) {
    if (!prior.trained()) throw std::runtime_error("elbo_score: prior is untrained");
    if (n_samples < 1) throw std::runtime_error("elbo_score: n_samples must be >= 1");
    if (t_lo < 1 || t_hi > prior.schedule().total_steps || t_lo > t_hi)
        throw std::runtime_error("elbo_score: bad timestep range");
    Rng rng(seed, "elbo");
    std::vector<Tensor<T>> terms;
    terms.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        int t = rng.uniform_int(t_lo, t_hi);
        Tensor<T> eps = Tensor<T>::vec(rng.template gaussian_vec<T>(z.size()));
        Tensor<T> z_t = diffuse(z, t, eps, prior.schedule());
        Tensor<T> r = sub(prior.predict(z_t, t, cond), eps);
        terms.push_back(neg(dot(r, r)));
    }
    return mean(stack(terms));
}

}  // namespace clipure
