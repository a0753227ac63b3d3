#include <cmath>
#include <cstdio>
#include <vector>

#include "clipure/dataset.hpp"
#include "clipure/encoder.hpp"
#include "doctest.h"

using namespace clipure;

namespace {

Tensord unit2(double x, double y) {
    double n = std::sqrt(x * x + y * y);
    return Tensord::vec({x / n, y / n});
}

}  // namespace

TEST_CASE("clip loss: single aligned pair is zero") {
    std::vector<Tensord> zi = {unit2(1, 0)};
    auto loss = clip_loss(zi, zi, 1.0);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("clip loss: two orthogonal identity pairs, tau=1") {
    // diag logits 1, off-diag 0: every term is log(e + 1) - 1
    std::vector<Tensord> z = {unit2(1, 0), unit2(0, 1)};
    auto loss = clip_loss(z, z, 1.0);
    double want = std::log(std::exp(1.0) + 1.0) - 1.0;  // ~0.31326
    CHECK(loss.item() == doctest::Approx(want).epsilon(1e-10));
    CHECK(loss.item() == doctest::Approx(0.313262).epsilon(1e-5));
}

TEST_CASE("clip loss: k orthogonal identity pairs match the closed form") {
    for (double tau : {0.5, 0.25, 1.0}) {
        std::vector<Tensord> z = {Tensord::vec({1, 0, 0, 0}), Tensord::vec({0, 1, 0, 0}),
                                  Tensord::vec({0, 0, 1, 0}), Tensord::vec({0, 0, 0, 1})};
        double k = 4;
        // -log( e^{1/tau} / (e^{1/tau} + k - 1) ), evaluated stably
        double want = std::log1p((k - 1) * std::exp(-1.0 / tau));
        auto loss = clip_loss(z, z, tau);
        CHECK(loss.item() == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("clip loss: gradient passes finite differences") {
    Rng rng(5, "clip-fd");
    std::vector<double> base = rng.gaussian_vec<double>(3);
    Tensord leaf = Tensord(std::vector<int>{3}, std::vector<double>(base), true);
    // fixed partners so only x varies
    Tensord z2 = Tensord::vec({0.3, -0.8, 0.5});
    Tensord t1 = Tensord::vec({0.9, 0.1, -0.2});
    Tensord t2 = Tensord::vec({-0.4, 0.6, 0.7});
    auto loss_of = [&](const Tensord& x) {
        return clip_loss(std::vector<Tensord>{x, z2}, std::vector<Tensord>{t1, t2}, 0.5);
    };
    Tensord loss = loss_of(leaf);
    backward(loss);
    auto g = leaf.grad();
    for (int i = 0; i < 3; ++i) {
        double h = 1e-6;
        auto up = base, dn = base;
        up[static_cast<std::size_t>(i)] += h;
        dn[static_cast<std::size_t>(i)] -= h;
        double fd = (loss_of(Tensord::vec(std::vector<double>(up))).item() -
                     loss_of(Tensord::vec(std::vector<double>(dn))).item()) /
                    (2 * h);
        CHECK(g[static_cast<std::size_t>(i)] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("clip loss input validation") {
    std::vector<Tensord> one = {unit2(1, 0)};
    std::vector<Tensord> two = {unit2(1, 0), unit2(0, 1)};
    CHECK_THROWS_AS(clip_loss(std::vector<Tensord>{}, std::vector<Tensord>{}, 1.0),
                    std::runtime_error);
    CHECK_THROWS_AS(clip_loss(one, two, 1.0), std::runtime_error);
    CHECK_THROWS_AS(clip_loss(one, one, 0.0), std::runtime_error);
}

TEST_CASE("encoder init is deterministic and encode shapes check out") {
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.image_hidden = 8;
    cfg.text_hidden = 8;
    cfg.token_dim = 8;
    DualEncoder<float> a(cfg, 48, 7), b(cfg, 48, 7);
    std::vector<float> img(48, 0.5f);
    auto za = a.encode_image(Tensorf::vec(std::vector<float>(img)));
    auto zb = b.encode_image(Tensorf::vec(std::vector<float>(img)));
    CHECK(za.data() == zb.data());
    CHECK(za.dim(0) == 16);
    auto ta = a.encode_text("a photo of a red circle");
    CHECK(ta.dim(0) == 16);
    CHECK_THROWS_AS(a.encode_image(Tensorf::vec({1.0f, 2.0f})), ShapeError);
    CHECK_THROWS_AS(a.encode_text(std::vector<int>{}), std::runtime_error);
}

TEST_CASE("zero epochs leave the encoder untouched") {
    auto ds = generate_dataset(3, 32, 10, 32, 32);
    EncoderConfig cfg;
    DualEncoder<float> enc(cfg, 3072, 7);
    std::vector<float> img(3072, 0.25f);
    auto before = enc.encode_image(Tensorf::vec(std::vector<float>(img))).data();
    TrainConfig tc;
    tc.epochs = 0;
    auto curve = train_encoder(enc, ds, tc);
    CHECK(curve.epoch_loss.empty());
    auto after = enc.encode_image(Tensorf::vec(std::vector<float>(img))).data();
    CHECK(before == after);
}

TEST_CASE("training reduces the contrastive loss and is reproducible") {
    auto ds = generate_dataset(3, 128, 10, 32, 32);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch = 32;
    DualEncoder<float> a(EncoderConfig{}, 3072, 7);
    auto curve_a = train_encoder(a, ds, tc);
    CHECK(curve_a.epoch_loss.size() == 3);
    CHECK(curve_a.epoch_loss.back() < curve_a.epoch_loss.front());
    DualEncoder<float> b(EncoderConfig{}, 3072, 7);
    auto curve_b = train_encoder(b, ds, tc);
    CHECK(curve_a.epoch_loss == curve_b.epoch_loss);
    std::vector<float> img(3072, 0.25f);
    CHECK(a.encode_image(Tensorf::vec(std::vector<float>(img))).data() ==
          b.encode_image(Tensorf::vec(std::vector<float>(img))).data());
}

TEST_CASE("checkpoint round trip is bit-identical") {
    auto ds = generate_dataset(3, 64, 10, 32, 32);
    EncoderConfig cfg;
    cfg.anisotropy = 2.5;
    DualEncoder<float> enc(cfg, 3072, 7);
    TrainConfig tc;
    tc.epochs = 1;
    train_encoder(enc, ds, tc);
    std::string path = "/tmp/clipure_test_encoder.bin";
    enc.save(path);
    auto back = DualEncoder<float>::load(path);
    CHECK(back.dim() == enc.dim());
    CHECK(back.input_pixels() == enc.input_pixels());
    CHECK(back.tau() == doctest::Approx(enc.tau()));
    CHECK(back.config().anisotropy == doctest::Approx(2.5));
    std::vector<float> img(3072, 0.3f);
    CHECK(back.encode_image(Tensorf::vec(std::vector<float>(img))).data() ==
          enc.encode_image(Tensorf::vec(std::vector<float>(img))).data());
    CHECK(back.encode_text("a photo of a blue ring").data() ==
          enc.encode_text("a photo of a blue ring").data());
    std::remove(path.c_str());
}

TEST_CASE("frozen encoder matches outputs but never tracks parameters") {
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.image_hidden = 8;
    cfg.text_hidden = 8;
    cfg.token_dim = 8;
    DualEncoder<double> enc(cfg, 48, 7);
    auto inf = enc.frozen();
    std::vector<double> img(48, 0.5);
    CHECK(inf.encode_image(Tensord::vec(std::vector<double>(img))).data() ==
          enc.encode_image(Tensord::vec(std::vector<double>(img))).data());
    // gradient flows to the input but not into the frozen weights
    Tensord leaf(std::vector<int>{48}, std::vector<double>(img), true);
    Tensord out = sum(inf.encode_image(leaf));
    backward(out);
    bool any = false;
    for (double g : leaf.grad()) any = any || g != 0.0;
    CHECK(any);
    for (auto* p : inf.params()) CHECK_FALSE(p->requires_grad());
    for (auto* p : enc.params()) CHECK(p->requires_grad());
}

TEST_CASE("anisotropy offsets both towers identically") {
    EncoderConfig cfg;
    cfg.dim = 16;
    cfg.image_hidden = 8;
    cfg.text_hidden = 8;
    cfg.token_dim = 8;
    cfg.anisotropy = 4.0;
    DualEncoder<double> with(cfg, 48, 7);
    cfg.anisotropy = 0.0;
    DualEncoder<double> without(cfg, 48, 7);
    std::vector<double> img(48, 0.5);
    auto zw = with.encode_image(Tensord::vec(std::vector<double>(img))).data();
    auto zo = without.encode_image(Tensord::vec(std::vector<double>(img))).data();
    auto tw = with.encode_text("a photo of a red circle").data();
    auto to = without.encode_text("a photo of a red circle").data();
    double n2 = 0;
    for (std::size_t i = 0; i < zw.size(); ++i) {
        double d_img = zw[i] - zo[i];
        double d_txt = tw[i] - to[i];
        CHECK(d_img == doctest::Approx(d_txt).epsilon(1e-9));
        n2 += d_img * d_img;
    }
    CHECK(std::sqrt(n2) == doctest::Approx(4.0).epsilon(1e-9));
}
