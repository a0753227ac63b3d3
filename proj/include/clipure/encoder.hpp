#pragma once

// Toy dual encoder: an MLP image tower and a bag-of-tokens text tower that
// map into a shared d-dimensional space, trained with the symmetric
// contrastive loss over cosine/temperature logits.

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/checkpoint.hpp"
#include "clipure/dataset.hpp"
#include "clipure/rng.hpp"
#include "clipure/tensor.hpp"

namespace clipure {

struct EncoderConfig {
    int dim = 64;
    int image_hidden = 64;
    int text_hidden = 64;
    int token_dim = 32;
    double tau = 0.07;
    // Embedding spaces of large contrastively trained encoders are strongly
    // anisotropic: all embeddings of both modalities live in a narrow cone
    // around a common axis. The toy model reproduces that structure by
    // initializing both towers' output biases to one shared random offset of
    // this norm (0 disables the cone).
    double anisotropy = 0.0;
};

struct TrainConfig {
    int epochs = 4;
    double lr = 0.05;
    int batch = 64;
    double momentum = 0.9;
    std::uint64_t seed = 17;
};

template <typename T>
class DualEncoder {
public:
    DualEncoder() = default;

    DualEncoder(const EncoderConfig& cfg, int input_pixels, std::uint64_t seed)
        : cfg_(cfg), input_pixels_(input_pixels) {
        if (cfg.tau <= 0) throw std::runtime_error("DualEncoder: tau must be > 0");
        Rng rng(seed, "encoder-init");
        int v = Vocab::standard().size();
        img_w1_ = init_matrix(rng, cfg.image_hidden, input_pixels);
        img_b1_ = Tensor<T>::zeros({cfg.image_hidden}, true);
        img_w2_ = init_matrix(rng, cfg.dim, cfg.image_hidden);
        img_b2_ = Tensor<T>::zeros({cfg.dim}, true);
        tok_emb_ = init_matrix(rng, v, cfg.token_dim);
        txt_w1_ = init_matrix(rng, cfg.text_hidden, cfg.token_dim);
        txt_b1_ = Tensor<T>::zeros({cfg.text_hidden}, true);
        txt_w2_ = init_matrix(rng, cfg.dim, cfg.text_hidden);
        txt_b2_ = Tensor<T>::zeros({cfg.dim}, true);
        offset_ = Tensor<T>::zeros({cfg.dim});
        if (cfg.anisotropy > 0) {
            auto axis = rng.gaussian_vec<double>(static_cast<std::size_t>(cfg.dim));
            double n = 0;
            for (double v : axis) n += v * v;
            n = std::sqrt(n);
            std::vector<T> offset(axis.size());
            for (std::size_t i = 0; i < axis.size(); ++i)
                offset[i] = static_cast<T>(axis[i] / n * cfg.anisotropy);
            // fixed buffer, deliberately not in params(): the cone is a
            // structural property of the space, not a trainable quantity
            offset_ = Tensor<T>(std::vector<int>{cfg.dim}, std::move(offset));
        }
    }

    int dim() const { return cfg_.dim; }
    int input_pixels() const { return input_pixels_; }
    double tau() const { return cfg_.tau; }
    const EncoderConfig& config() const { return cfg_; }

    Tensor<T> encode_image(const Tensor<T>& x) const {
        if (x.ndim() != 1 || x.dim(0) != input_pixels_)
            throw ShapeError("encode_image: expected flat image of " +
                             std::to_string(input_pixels_) + " values");
        Tensor<T> h = relu(add(matvec(img_w1_, x), img_b1_));
        return add(add(matvec(img_w2_, h), img_b2_), offset_);
    }

    Tensor<T> encode_text(const std::vector<int>& tokens) const {
        if (tokens.empty()) throw std::runtime_error("encode_text: empty token sequence");
        Tensor<T> e = embed_mean(tok_emb_, tokens);
        Tensor<T> h = relu(add(matvec(txt_w1_, e), txt_b1_));
        return add(add(matvec(txt_w2_, h), txt_b2_), offset_);
    }

    Tensor<T> encode_text(const std::string& text) const {
        return encode_text(Vocab::standard().encode(text));
    }

    std::vector<Tensor<T>*> params() {
        return {&img_w1_, &img_b1_, &img_w2_, &img_b2_,
                &tok_emb_, &txt_w1_, &txt_b1_, &txt_w2_, &txt_b2_};
    }

    // Inference view: parameters re-wrapped without gradient tracking.
    // Concurrent backward passes through a frozen encoder touch only the
    // input's subgraph, so it is safe to share across threads.
    DualEncoder frozen() const {
        DualEncoder c = *this;
        auto cut = [](Tensor<T>& t) { t = Tensor<T>(t.shape(), t.data(), false); };
        cut(c.img_w1_);
        cut(c.img_b1_);
        cut(c.img_w2_);
        cut(c.img_b2_);
        cut(c.tok_emb_);
        cut(c.txt_w1_);
        cut(c.txt_b1_);
        cut(c.txt_w2_);
        cut(c.txt_b2_);
        cut(c.offset_);
        return c;
    }

    void save(const std::string& path) const {
        Checkpoint<T> ck;
        ck.magic = "CLPR";
        ck.dim = static_cast<std::uint32_t>(cfg_.dim);
        ck.add("meta", Tensor<T>::vec({static_cast<T>(input_pixels_),
                                       static_cast<T>(cfg_.image_hidden),
                                       static_cast<T>(cfg_.text_hidden),
                                       static_cast<T>(cfg_.token_dim), static_cast<T>(cfg_.tau),
                                       static_cast<T>(cfg_.anisotropy)}));
        ck.add("img_w1", img_w1_);
        ck.add("img_b1", img_b1_);
        ck.add("img_w2", img_w2_);
        ck.add("img_b2", img_b2_);
        ck.add("tok_emb", tok_emb_);
        ck.add("txt_w1", txt_w1_);
        ck.add("txt_b1", txt_b1_);
        ck.add("txt_w2", txt_w2_);
        ck.add("txt_b2", txt_b2_);
        ck.add("offset", offset_);
        ck.save(path);
    }

    static DualEncoder load(const std::string& path) {
        auto ck = Checkpoint<T>::load(path, "CLPR");
        DualEncoder enc;
        const auto& meta = ck.get("meta").data();
        enc.cfg_.dim = static_cast<int>(ck.dim);
        enc.input_pixels_ = static_cast<int>(meta[0]);
        enc.cfg_.image_hidden = static_cast<int>(meta[1]);
        enc.cfg_.text_hidden = static_cast<int>(meta[2]);
        enc.cfg_.token_dim = static_cast<int>(meta[3]);
        enc.cfg_.tau = static_cast<double>(meta[4]);
        if (meta.size() > 5) enc.cfg_.anisotropy = static_cast<double>(meta[5]);
        auto as_param = [](const Tensor<T>& t) { return Tensor<T>(t.shape(), t.data(), true); };
        enc.img_w1_ = as_param(ck.get("img_w1"));
        enc.img_b1_ = as_param(ck.get("img_b1"));
        enc.img_w2_ = as_param(ck.get("img_w2"));
        enc.img_b2_ = as_param(ck.get("img_b2"));
        enc.tok_emb_ = as_param(ck.get("tok_emb"));
        enc.txt_w1_ = as_param(ck.get("txt_w1"));
        enc.txt_b1_ = as_param(ck.get("txt_b1"));
        enc.txt_w2_ = as_param(ck.get("txt_w2"));
        enc.txt_b2_ = as_param(ck.get("txt_b2"));
        enc.offset_ = ck.get("offset").detach();
        return enc;
    }

private:
    static Tensor<T> init_matrix(Rng& rng, int rows, int cols) {
        double s = std::sqrt(6.0 / (rows + cols));
        std::vector<T> data(static_cast<std::size_t>(rows) * cols);
        for (auto& v : data) v = static_cast<T>(rng.uniform(-s, s));
        return Tensor<T>({rows, cols}, std::move(data), true);
    }

    EncoderConfig cfg_;
    int input_pixels_ = 0;
    Tensor<T> img_w1_, img_b1_, img_w2_, img_b2_;
    Tensor<T> tok_emb_, txt_w1_, txt_b1_, txt_w2_, txt_b2_;
    Tensor<T> offset_;
};

// Symmetric InfoNCE over cosine/tau logits, averaged over both directions.
template <typename T>
Tensor<T> clip_loss(const std::vector<Tensor<T>>& zi, const std::vector<Tensor<T>>& zt, double tau) {
    if (zi.empty() || zi.size() != zt.size())
        throw std::runtime_error("clip_loss: batches must be non-empty and equal-sized");
    if (tau <= 0) throw std::runtime_error("clip_loss: tau must be > 0");
    const std::size_t n = zi.size();
    const T inv_tau = static_cast<T>(1.0 / tau);

    std::vector<std::vector<Tensor<T>>> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        logits[i].reserve(n);
        for (std::size_t j = 0; j < n; ++j)
            logits[i].push_back(scale(cosine(zi[i], zt[j]), inv_tau));
    }

    std::vector<Tensor<T>> terms;
    terms.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> row = stack(logits[i]);
        terms.push_back(sub(logsumexp(row), logits[i][i]));
    }
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<Tensor<T>> col;
        col.reserve(n);
        for (std::size_t i = 0; i < n; ++i) col.push_back(logits[i][j]);
        terms.push_back(sub(logsumexp(stack(col)), logits[j][j]));
    }
    return mean(stack(terms));  // mean over 2n terms == (1/2N) * symmetric sum
}

template <typename T>
struct TrainResult {
    std::vector<double> epoch_loss;
};

// Plain SGD with momentum; bit-reproducible for a fixed seed.
template <typename T>
TrainResult<T> train_encoder(DualEncoder<T>& enc, const GlyphDataset& ds, const TrainConfig& cfg) {
    if (ds.n == 0) throw std::runtime_error("train_encoder: empty dataset");
    auto params = enc.params();
    std::vector<std::vector<T>> velocity(params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
        velocity[p].assign(params[p]->size(), T(0));

    TrainResult<T> result;
    Rng shuffle_rng(cfg.seed, "train-shuffle");
    std::vector<int> order(static_cast<std::size_t>(ds.n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double epoch_sum = 0;
        int batches = 0;
        for (int start = 0; start < ds.n; start += cfg.batch) {
            int end = std::min(ds.n, start + cfg.batch);
            if (end - start < 2 && ds.n >= 2) break;  // drop a trailing singleton batch
            std::vector<Tensor<T>> zi, zt;
            for (int s = start; s < end; ++s) {
                int idx = order[static_cast<std::size_t>(s)];
                std::vector<T> px(ds.images[idx].begin(), ds.images[idx].end());
                zi.push_back(enc.encode_image(Tensor<T>::vec(std::move(px))));
                zt.push_back(enc.encode_text(ds.captions[idx]));
            }
            Tensor<T> loss = clip_loss(zi, zt, enc.tau());
            for (auto* p : params) p->zero_grad();
            backward(loss);
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto& vel = velocity[p];
                const auto& g = params[p]->grad();
                auto& w = params[p]->mutable_data();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    vel[i] = static_cast<T>(cfg.momentum) * vel[i] - static_cast<T>(cfg.lr) * g[i];
                    w[i] += vel[i];
                }
            }
            epoch_sum += static_cast<double>(loss.item());
            ++batches;
        }
        result.epoch_loss.push_back(batches ? epoch_sum / batches : 0.0);
    }
    return result;
}

}  // namespace clipure
