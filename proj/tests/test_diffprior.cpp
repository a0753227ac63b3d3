#include <cmath>
#include <cstdio>
#include <vector>

#include "clipure/diffprior.hpp"
#include "clipure/rng.hpp"
#include "doctest.h"

using namespace clipure;

TEST_CASE("cosine schedule: endpoints, monotonicity, bounds") {
    auto s = NoiseSchedule::cosine(100);
    CHECK(s.at(0) == doctest::Approx(1.0));
    CHECK(s.at(100) < 0.01);
    for (int t = 1; t <= 100; ++t) {
        CHECK(s.at(t) < s.at(t - 1));
        CHECK(s.at(t) > 0.0);
        CHECK(s.at(t) <= 1.0);
    }
    CHECK_THROWS_AS(s.at(-1), std::runtime_error);
    CHECK_THROWS_AS(s.at(101), std::runtime_error);
    CHECK_THROWS_AS(NoiseSchedule::cosine(0), std::runtime_error);
}

TEST_CASE("diffuse mixes signal and noise with the schedule weights") {
    auto s = NoiseSchedule::cosine(100);
    Tensord z0 = Tensord::vec({1, -2, 3});
    Tensord eps = Tensord::vec({0.5, 0.5, 0.5});
    int t = 40;
    auto zt = diffuse(z0, t, eps, s);
    double a = std::sqrt(s.at(t)), b = std::sqrt(1.0 - s.at(t));
    for (int i = 0; i < 3; ++i)
        CHECK(zt.data()[static_cast<std::size_t>(i)] ==
              doctest::Approx(a * z0.data()[static_cast<std::size_t>(i)] +
                              b * eps.data()[static_cast<std::size_t>(i)]));
    CHECK_THROWS_AS(diffuse(z0, t, Tensord::vec({1, 2}), s), ShapeError);
}

TEST_CASE("time embedding is 8-dim and bounded") {
    DiffPrior<double> prior(4, 0, 8, NoiseSchedule::cosine(100), 3);
    for (int t : {0, 1, 50, 100}) {
        auto e = prior.time_embedding(t);
        CHECK(e.dim(0) == kTimeEmbedDim);
        for (double v : e.data()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(prior.time_embedding(0).data() != prior.time_embedding(50).data());
}

TEST_CASE("sq_error_grad matches the autodiff gradient") {
    const int d = 6;
    DiffPrior<double> prior(d, d, 12, NoiseSchedule::cosine(100), 3);
    Rng rng(4, "vecs");
    Tensord cond = Tensord::vec(rng.gaussian_vec<double>(d));
    Tensord eps = Tensord::vec(rng.gaussian_vec<double>(d));
    std::vector<double> base = rng.gaussian_vec<double>(d);
    int t = 95;

    Tensord leaf(std::vector<int>{d}, std::vector<double>(base), true);
    Tensord r = sub(prior.predict(leaf, t, cond), eps);
    Tensord loss = dot(r, r);
    backward(loss);
    auto want = leaf.grad();

    NoGradGuard ng;
    auto got = prior.sq_error_grad(Tensord::vec(std::vector<double>(base)), t, eps, cond).data();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("training reduces the denoising loss below half of the start") {
    const int d = 8;
    Rng rng(6, "corpus");
    // a tight cluster: easy to denoise
    std::vector<double> center = rng.gaussian_vec<double>(d, 2.0);
    std::vector<std::vector<double>> corpus;
    for (int i = 0; i < 128; ++i) {
        auto v = center;
        for (auto& x : v) x += rng.gaussian(0.0, 0.05);
        corpus.push_back(v);
    }
    DiffPrior<double> prior(d, 0, 32, NoiseSchedule::cosine(100), 3);
    CHECK_FALSE(prior.trained());
    PriorTrainConfig cfg;
    cfg.epochs = 20;
    auto curve = train_prior(prior, corpus, Tensord(), cfg);
    CHECK(prior.trained());
    CHECK(curve.size() == 20);
    CHECK(curve.back() < 0.5 * curve.front());
}

TEST_CASE("training is seed-deterministic") {
    Rng rng(6, "corpus");
    std::vector<std::vector<double>> corpus;
    for (int i = 0; i < 32; ++i) corpus.push_back(rng.gaussian_vec<double>(4));
    PriorTrainConfig cfg;
    cfg.epochs = 2;
    DiffPrior<double> a(4, 0, 8, NoiseSchedule::cosine(100), 3);
    DiffPrior<double> b(4, 0, 8, NoiseSchedule::cosine(100), 3);
    auto ca = train_prior(a, corpus, Tensord(), cfg);
    auto cb = train_prior(b, corpus, Tensord(), cfg);
    CHECK(ca == cb);
}

TEST_CASE("elbo_score requires training and orders in-cluster above far-out") {
    const int d = 8;
    Rng rng(6, "corpus");
    std::vector<double> center = rng.gaussian_vec<double>(d, 2.0);
    std::vector<std::vector<double>> corpus;
    for (int i = 0; i < 128; ++i) {
        auto v = center;
        for (auto& x : v) x += rng.gaussian(0.0, 0.05);
        corpus.push_back(v);
    }
    DiffPrior<double> prior(d, 0, 32, NoiseSchedule::cosine(100), 3);
    Tensord probe = Tensord::vec(std::vector<double>(center));
    CHECK_THROWS_AS(elbo_score(probe, prior, Tensord(), 90, 100, 4, 1), std::runtime_error);
    PriorTrainConfig cfg;
    cfg.epochs = 20;
    train_prior(prior, corpus, Tensord(), cfg);

    std::vector<double> far = center;
    for (auto& x : far) x = -x;
    double s_in = 0, s_out = 0;
    for (int k = 0; k < 8; ++k) {
        s_in += elbo_score(probe, prior, Tensord(), 5, 30, 8, static_cast<std::uint64_t>(k)).item();
        s_out += elbo_score(Tensord::vec(std::vector<double>(far)), prior, Tensord(), 5, 30, 8,
                            static_cast<std::uint64_t>(k))
                     .item();
    }
    CHECK(s_in > s_out);
    CHECK_THROWS_AS(elbo_score(probe, prior, Tensord(), 0, 100, 4, 1), std::runtime_error);
    CHECK_THROWS_AS(elbo_score(probe, prior, Tensord(), 90, 101, 4, 1), std::runtime_error);
    CHECK_THROWS_AS(elbo_score(probe, prior, Tensord(), 90, 100, 0, 1), std::runtime_error);
}

TEST_CASE("checkpoint round trip preserves predictions and the trained flag") {
    DiffPrior<float> prior(6, 6, 12, NoiseSchedule::cosine(50), 9);
    Rng rng(2, "corpus");
    std::vector<std::vector<float>> corpus;
    for (int i = 0; i < 16; ++i) corpus.push_back(rng.gaussian_vec<float>(6));
    Tensorf cond = Tensorf::vec(rng.gaussian_vec<float>(6));
    PriorTrainConfig cfg;
    cfg.epochs = 1;
    train_prior(prior, corpus, cond, cfg);
    std::string path = "/tmp/clipure_test_prior.bin";
    prior.save(path);
    auto back = DiffPrior<float>::load(path);
    CHECK(back.trained());
    CHECK(back.data_dim() == 6);
    CHECK(back.cond_dim() == 6);
    CHECK(back.schedule().total_steps == 50);
    NoGradGuard ng;
    Tensorf z = Tensorf::vec(rng.gaussian_vec<float>(6));
    CHECK(back.predict(z, 25, cond).data() == prior.predict(z, 25, cond).data());
    std::remove(path.c_str());
}

TEST_CASE("predict validates shapes") {
    DiffPrior<double> prior(4, 4, 8, NoiseSchedule::cosine(100), 3);
    Tensord good = Tensord::vec({1, 2, 3, 4});
    Tensord bad = Tensord::vec({1, 2});
    CHECK_THROWS_AS(prior.predict(bad, 5, good), ShapeError);
    CHECK_THROWS_AS(prior.predict(good, 5, bad), ShapeError);
}
