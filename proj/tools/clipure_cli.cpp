// Command-line front end. Exit codes: 0 success, 2 config error,
// 3 numerical failure, 4 threshold miss (--ci).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clipure/harness.hpp"

using namespace clipure;
namespace fs = std::filesystem;

namespace {

struct CliState {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    ExperimentConfig build() const {
        ExperimentConfig cfg =
            config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        return cfg;
    }
};

// one flag per config key, name identical to the key
void add_config_flags(CLI::App* cmd, CliState& state) {
    cmd->add_option("--config", state.config_path, "key=value config file with [section] headers");
    for (const auto& [key, value] : ExperimentConfig{}.items()) {
        std::string k = key;
        cmd->add_option_function<std::string>(
               "--" + k, [&state, k](const std::string& v) { state.overrides.emplace_back(k, v); },
               "override config key " + k + " (default " + value + ")")
            ->expected(1);
    }
    cmd->add_option_function<std::string>(
           "--out.dir",
           [&state](const std::string& v) { state.overrides.emplace_back("out.dir", v); },
           "run directory root (default runs)")
        ->expected(1);
    cmd->add_option_function<std::string>(
           "--eval.workers",
           [&state](const std::string& v) { state.overrides.emplace_back("eval.workers", v); },
           "worker threads, 0 = hardware concurrency")
        ->expected(1);
}

fs::path run_dir(const ExperimentConfig& cfg) { return fs::path(cfg.out_dir) / cfg.hash(); }

DualEncoder<float> trained_encoder(const ExperimentConfig& cfg, const GlyphDataset& train_ds,
                                   bool persist) {
    fs::path ck = run_dir(cfg) / "checkpoints" / "encoder.bin";
    if (persist && fs::exists(ck)) return DualEncoder<float>::load(ck.string());
    DualEncoder<float> enc(cfg.encoder, static_cast<int>(train_ds.pixels()), cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    train_encoder(enc, train_ds, tc);
    if (persist) {
        fs::create_directories(ck.parent_path());
        enc.save(ck.string());
    }
    return enc;
}

GlyphDataset training_split(const ExperimentConfig& cfg, GlyphDataset& full) {
    full = generate_dataset(cfg.seed, cfg.data_n + cfg.eval_samples, cfg.data_k, cfg.data_h,
                            cfg.data_w);
    GlyphDataset train_ds = full;
    train_ds.n = cfg.data_n;
    train_ds.images.resize(static_cast<std::size_t>(cfg.data_n));
    train_ds.labels.resize(static_cast<std::size_t>(cfg.data_n));
    train_ds.captions.resize(static_cast<std::size_t>(cfg.data_n));
    return train_ds;
}

DiffPrior<float> latent_prior(const ExperimentConfig& cfg, const DualEncoder<float>& enc,
                              const ClassBank<float>& bank, const GlyphDataset& train_ds) {
    fs::path ck = run_dir(cfg) / "checkpoints" / "prior.bin";
    if (fs::exists(ck)) return DiffPrior<float>::load(ck.string());
    std::vector<std::vector<float>> corpus;
    {
        NoGradGuard ng;
        for (int i = 0; i < train_ds.n; ++i)
            corpus.push_back(
                enc.encode_image(
                       Tensorf::vec(std::vector<float>(train_ds.images[static_cast<std::size_t>(i)])))
                    .data());
    }
    DiffPrior<float> prior(cfg.encoder.dim, cfg.encoder.dim, cfg.prior_hidden,
                           NoiseSchedule::cosine(100), cfg.seed);
    PriorTrainConfig pc = cfg.prior_train;
    pc.seed = cfg.seed;
    train_prior(prior, corpus, bank.blank_embedding, pc);
    fs::create_directories(ck.parent_path());
    prior.save(ck.string());
    return prior;
}

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& labels_out) {
    auto ds = generate_dataset(cfg.seed, cfg.data_n, cfg.data_k, cfg.data_h, cfg.data_w);
    std::uint64_t checksum = splitmix64(cfg.seed);
    for (const auto& img : ds.images)
        for (float px : img)
            checksum = splitmix64(checksum ^ static_cast<std::uint64_t>(px * (1 << 24)));
    nlohmann::json j;
    j["n"] = ds.n;
    j["k"] = ds.num_classes;
    j["height"] = ds.height;
    j["width"] = ds.width;
    j["class_names"] = ds.class_names;
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(checksum));
    j["checksum"] = buf;
    std::cout << j.dump(2) << "\n";
    if (!labels_out.empty()) {
        std::ofstream out(labels_out);
        out << "sample_id,label,class_name\n";
        for (int i = 0; i < ds.n; ++i)
            out << i << "," << ds.labels[static_cast<std::size_t>(i)] << ","
                << ds.class_names[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]
                << "\n";
    }
    return 0;
}

int cmd_train_encoder(const ExperimentConfig& cfg) {
    GlyphDataset full;
    auto train_ds = training_split(cfg, full);
    DualEncoder<float> enc(cfg.encoder, static_cast<int>(train_ds.pixels()), cfg.seed);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    auto curve = train_encoder(enc, train_ds, tc);
    fs::path ck = run_dir(cfg) / "checkpoints" / "encoder.bin";
    fs::create_directories(ck.parent_path());
    enc.save(ck.string());
    nlohmann::json j;
    j["checkpoint"] = ck.string();
    j["epoch_loss"] = curve.epoch_loss;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_train_prior(const ExperimentConfig& cfg, bool pixel) {
    GlyphDataset full;
    auto train_ds = training_split(cfg, full);
    std::vector<double> curve;
    fs::path ck = run_dir(cfg) / "checkpoints" / (pixel ? "pixel_prior.bin" : "prior.bin");
    fs::create_directories(ck.parent_path());
    PriorTrainConfig pc = cfg.prior_train;
    pc.seed = cfg.seed;
    if (pixel) {
        DiffPrior<float> prior(static_cast<int>(train_ds.pixels()), 0, cfg.prior_hidden,
                               NoiseSchedule::cosine(100), cfg.seed);
        curve = train_prior(prior, train_ds.images, Tensorf(), pc);
        prior.save(ck.string());
    } else {
        auto enc = trained_encoder(cfg, train_ds, true);
        auto bank = build_bank(enc, full.class_names, cfg.resolve_templates());
        std::vector<std::vector<float>> corpus;
        {
            NoGradGuard ng;
            for (int i = 0; i < train_ds.n; ++i)
                corpus.push_back(
                    enc.encode_image(
                           Tensorf::vec(std::vector<float>(
                               train_ds.images[static_cast<std::size_t>(i)].begin(),
                               train_ds.images[static_cast<std::size_t>(i)].end())))
                        .data());
        }
        DiffPrior<float> prior(cfg.encoder.dim, cfg.encoder.dim, cfg.prior_hidden,
                               NoiseSchedule::cosine(100), cfg.seed);
        curve = train_prior(prior, corpus, bank.blank_embedding, pc);
        prior.save(ck.string());
    }
    nlohmann::json j;
    j["checkpoint"] = ck.string();
    j["epoch_loss"] = curve;
    j["loss_ratio"] = curve.empty() ? 1.0 : curve.back() / curve.front();
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_attack(const ExperimentConfig& cfg, bool defended) {
    GlyphDataset full;
    auto train_ds = training_split(cfg, full);
    auto enc = trained_encoder(cfg, train_ds, true).frozen();
    auto bank = build_bank(enc, full.class_names, cfg.resolve_templates());
    PurifyConfig pure = cfg.purify;
    pure.seed = cfg.seed;
    DiffPrior<float> prior;
    if (defended && cfg.purify.variant == PurifyVariant::Diff)
        prior = latent_prior(cfg, enc, bank, train_ds).frozen();
    Pipeline<float> pipeline{&enc, &bank, defended ? &pure : nullptr,
                             prior.data_dim() > 0 ? &prior : nullptr};

    int n = cfg.eval_samples, ok = 0, clean_ok = 0;
    for (int i = 0; i < n; ++i) {
        const auto& x0 = full.images[static_cast<std::size_t>(cfg.data_n + i)];
        int y = full.labels[static_cast<std::size_t>(cfg.data_n + i)];
        std::uint64_t s = substream(cfg.seed, "attack-sample", static_cast<std::uint64_t>(i));
        std::uint64_t ps = substream(cfg.seed, "purify-sample", static_cast<std::uint64_t>(i));
        auto x = pgd(std::vector<float>(x0.begin(), x0.end()), y, pipeline, cfg.attack, s);
        clean_ok += pipeline.predict(std::vector<float>(x0.begin(), x0.end()), ps).label == y;
        ok += pipeline.predict(x, ps).label == y;
    }
    nlohmann::json j;
    j["defended"] = defended;
    j["mode"] = cfg.attack.mode == AttackMode::Direct     ? "direct"
                : cfg.attack.mode == AttackMode::Adaptive ? "adaptive"
                                                          : "bpda";
    j["samples"] = n;
    j["clean_accuracy"] = static_cast<double>(clean_ok) / n;
    j["robust_accuracy"] = static_cast<double>(ok) / n;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_purify(const ExperimentConfig& cfg, int sample) {
    GlyphDataset full;
    auto train_ds = training_split(cfg, full);
    auto enc = trained_encoder(cfg, train_ds, true).frozen();
    auto bank = build_bank(enc, full.class_names, cfg.resolve_templates());
    if (sample < 0 || sample >= cfg.eval_samples)
        throw ConfigError("--sample must be in [0, eval.samples)");
    DiffPrior<float> prior;
    if (cfg.purify.variant == PurifyVariant::Diff)
        prior = latent_prior(cfg, enc, bank, train_ds).frozen();
    const auto& img = full.images[static_cast<std::size_t>(cfg.data_n + sample)];
    NoGradGuard ng;
    Tensorf z = enc.encode_image(Tensorf::vec(std::vector<float>(img)));
    PurifyConfig pure = cfg.purify;
    pure.seed = substream(cfg.seed, "purify-sample", static_cast<std::uint64_t>(sample));
    std::vector<PurifyTraceRow> trace;
    Tensorf z_pure = purify_embed(z, pure, bank, prior.data_dim() > 0 ? &prior : nullptr,
                                  enc.tau(), UINT64_MAX, &trace);
    nlohmann::json j;
    j["sample"] = sample;
    j["true_label"] = full.labels[static_cast<std::size_t>(cfg.data_n + sample)];
    j["pred_before"] = classify(z, bank).label;
    j["pred_after"] = classify(z_pure, bank).label;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& row : trace)
        steps.push_back({{"step", row.step},
                         {"cos_to_blank", row.cos_to_blank},
                         {"predicted", row.predicted}});
    j["trace"] = steps;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, bool force, bool ci) {
    auto r = run<float>(cfg, force);
    std::cout << r.to_json().dump(2) << "\n";
    if (ci) {
        bool ok = r.clean_accuracy >= 0.90 && r.undefended_robust_accuracy <= 0.10 &&
                  r.defended_robust_accuracy >= 0.60 &&
                  r.clean_accuracy - r.defended_clean_accuracy <= 0.03;
        if (!ok) {
            std::fprintf(stderr, "eval: acceptance thresholds missed\n");
            return 4;
        }
    }
    return 0;
}

int cmd_risk(const ExperimentConfig& cfg, const std::string& estimator) {
    GlyphDataset full;
    auto train_ds = training_split(cfg, full);
    auto enc = trained_encoder(cfg, train_ds, true).frozen();
    auto bank = build_bank(enc, full.class_names, cfg.resolve_templates());
    Pipeline<float> undefended{&enc, &bank, nullptr, nullptr};

    const int n = cfg.eval_samples;
    AttackConfig atk = cfg.attack;
    atk.mode = AttackMode::Direct;
    std::vector<std::vector<float>> ben, adv;
    for (int i = 0; i < n; ++i) {
        const auto& x0 = full.images[static_cast<std::size_t>(cfg.data_n + i)];
        int y = full.labels[static_cast<std::size_t>(cfg.data_n + i)];
        ben.emplace_back(x0.begin(), x0.end());
        adv.push_back(pgd(ben.back(), y, undefended, atk,
                          substream(cfg.seed, "attack-sample", static_cast<std::uint64_t>(i))));
    }

    auto embed = [&](const std::vector<float>& im) {
        NoGradGuard ng;
        return enc.encode_image(Tensorf::vec(std::vector<float>(im))).data();
    };
    double sigma = 1.0;
    double dt = cfg.attack.eps / cfg.attack.iters;
    ScoreSet s_adv{"adv", estimator, {}}, s_ben{"ben", estimator, {}};
    std::vector<std::vector<float>> grad_inputs;
    std::function<Tensorf(const Tensorf&)> score_fn;

    if (estimator == "latent-cos") {
        for (int i = 0; i < n; ++i) {
            auto za = embed(adv[static_cast<std::size_t>(i)]);
            auto zb = embed(ben[static_cast<std::size_t>(i)]);
            NoGradGuard ng;
            s_adv.scores.push_back(
                cosine(Tensorf::vec(std::vector<float>(za)), bank.blank_embedding).item());
            s_ben.scores.push_back(
                cosine(Tensorf::vec(std::move(zb)), bank.blank_embedding).item());
            grad_inputs.push_back(std::move(za));
        }
        Tensorf blank = bank.blank_embedding;
        score_fn = [blank](const Tensorf& z) { return cosine(z, blank); };
    } else if (estimator == "latent-diff-elbo" || estimator == "pixel-elbo") {
        bool pixel = estimator == "pixel-elbo";
        DiffPrior<float> prior;
        fs::path ck = run_dir(cfg) / "checkpoints" / (pixel ? "pixel_prior.bin" : "prior.bin");
        if (fs::exists(ck)) {
            prior = DiffPrior<float>::load(ck.string());
        } else {
            PriorTrainConfig pc = cfg.prior_train;
            pc.seed = cfg.seed;
            if (pixel) {
                prior = DiffPrior<float>(static_cast<int>(train_ds.pixels()), 0, cfg.prior_hidden,
                                         NoiseSchedule::cosine(100), cfg.seed);
                train_prior(prior, train_ds.images, Tensorf(), pc);
            } else {
                std::vector<std::vector<float>> corpus;
                {
                    NoGradGuard ng;
                    for (int i = 0; i < train_ds.n; ++i)
                        corpus.push_back(embed(train_ds.images[static_cast<std::size_t>(i)]));
                }
                prior = DiffPrior<float>(cfg.encoder.dim, cfg.encoder.dim, cfg.prior_hidden,
                                         NoiseSchedule::cosine(100), cfg.seed);
                train_prior(prior, corpus, bank.blank_embedding, pc);
            }
            fs::create_directories(ck.parent_path());
            prior.save(ck.string());
        }
        auto prior_inf = prior.frozen();
        Tensorf cond = pixel ? Tensorf() : bank.blank_embedding;
        int t_lo = cfg.purify.t_lo, t_hi = cfg.purify.t_hi;
        for (int i = 0; i < n; ++i) {
            std::vector<float> va = pixel ? adv[static_cast<std::size_t>(i)]
                                          : embed(adv[static_cast<std::size_t>(i)]);
            std::vector<float> vb = pixel ? ben[static_cast<std::size_t>(i)]
                                          : embed(ben[static_cast<std::size_t>(i)]);
            NoGradGuard ng;
            std::uint64_t s = substream(cfg.seed, "elbo-score", static_cast<std::uint64_t>(i));
            s_adv.scores.push_back(
                elbo_score(Tensorf::vec(std::vector<float>(va)), prior_inf, cond, t_lo, t_hi, 8, s)
                    .item());
            s_ben.scores.push_back(
                elbo_score(Tensorf::vec(std::move(vb)), prior_inf, cond, t_lo, t_hi, 8, s).item());
            grad_inputs.push_back(std::move(va));
        }
        std::uint64_t gs = substream(cfg.seed, "elbo-grad");
        score_fn = [prior_inf, cond, t_lo, t_hi, gs](const Tensorf& z) {
            return elbo_score(z, prior_inf, cond, t_lo, t_hi, 4, gs);
        };
    } else {
        throw ConfigError("unknown estimator '" + estimator +
                          "' (latent-cos | latent-diff-elbo | pixel-elbo)");
    }

    auto r = risk_report<float>(estimator, s_adv, s_ben, grad_inputs, score_fn, sigma, dt);
    fs::path plots = run_dir(cfg) / "plots";
    fs::create_directories(plots);
    fs::path csv = plots / ("kl-histogram-" + estimator + ".csv");
    emit_kl_histogram_csv(csv.string(), estimator, r.histograms);

    nlohmann::json j;
    j["estimator"] = r.estimator;
    j["kl_term"] = r.kl_term;
    j["grad_norm_term"] = r.grad_norm_term;
    j["lower_bound"] = r.lower_bound;
    j["sigma"] = r.sigma;
    j["dt"] = r.dt;
    j["n_adv"] = r.n_adv;
    j["n_ben"] = r.n_ben;
    j["histogram_csv"] = csv.string();
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& family, bool force) {
    fs::path plots = run_dir(cfg) / "plots";
    fs::create_directories(plots);
    std::vector<std::pair<double, RunReport>> rows;
    if (family == "eta") {
        for (double eta : {0.1, 1.0, 10.0, 30.0, 100.0}) {
            auto c = cfg;
            c.purify.eta = eta;
            rows.emplace_back(eta, run<float>(c, force));
        }
        emit_eta_sweep_csv((plots / "eta-sweep.csv").string(), rows);
        std::cout << (plots / "eta-sweep.csv").string() << "\n";
    } else if (family == "eps") {
        for (double eps : {0.0, 2.0 / 255, 4.0 / 255, 8.0 / 255}) {
            auto c = cfg;
            c.attack.eps = eps;
            rows.emplace_back(eps, run<float>(c, force));
        }
        emit_eps_sweep_csv((plots / "eps-sweep.csv").string(), rows);
        std::cout << (plots / "eps-sweep.csv").string() << "\n";
    } else if (family == "guidance") {
        for (double w : {0.0, 1e-5, 1e-4, 1e-3}) {
            auto c = cfg;
            c.purify.guidance_weight = w;
            rows.emplace_back(w, run<float>(c, force));
        }
        emit_guidance_sweep_csv((plots / "guidance-sweep.csv").string(), rows);
        std::cout << (plots / "guidance-sweep.csv").string() << "\n";
    } else {
        throw ConfigError("unknown sweep family '" + family + "' (eta | eps | guidance)");
    }
    return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& hash) {
    fs::path dir = fs::path(cfg.out_dir) / (hash.empty() ? cfg.hash() : hash);
    fs::path path = dir / "report.json";
    if (!fs::exists(path)) throw ConfigError("no report at " + path.string() + "; run eval first");
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale latent purification laboratory"};
    app.require_subcommand(1);

    CliState state;
    std::string labels_out, estimator = "latent-cos", family = "eta", hash;
    int sample = 0;
    bool pixel = false, defended = false, force = false, ci = false;

    auto* gen = app.add_subcommand("gen-data", "generate the glyph dataset and print a summary");
    gen->add_option("--labels-out", labels_out, "write a labels CSV here");
    auto* tenc = app.add_subcommand("train-encoder", "train the dual encoder and checkpoint it");
    auto* tpri = app.add_subcommand("train-prior", "train the diffusion prior and checkpoint it");
    tpri->add_flag("--pixel", pixel, "train the pixel-space twin instead of the latent prior");
    auto* atk = app.add_subcommand("attack", "attack the eval split and print robust accuracy");
    atk->add_flag("--defended", defended, "attack through the purification defense");
    auto* pur = app.add_subcommand("purify", "trace purification of one eval sample");
    pur->add_option("--sample", sample, "eval sample index");
    auto* ev = app.add_subcommand("eval", "full pipeline run with persisted artifacts");
    ev->add_flag("--force", force, "recompute even if the run directory exists");
    ev->add_flag("--ci", ci, "exit 4 when the headline thresholds are missed");
    auto* rsk = app.add_subcommand("risk", "score-separation risk report for one estimator");
    rsk->add_option("--estimator", estimator, "latent-cos | latent-diff-elbo | pixel-elbo");
    auto* swp = app.add_subcommand("sweep", "run a parameter sweep and emit its CSV");
    swp->add_option("--family", family, "eta | eps | guidance");
    swp->add_flag("--force", force, "recompute even if run directories exist");
    auto* rep = app.add_subcommand("report", "print the persisted report for a config");
    rep->add_option("--hash", hash, "config hash (default: hash of the given config)");

    for (auto* cmd : {gen, tenc, tpri, atk, pur, ev, rsk, swp, rep}) add_config_flags(cmd, state);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg = state.build();
        if (gen->parsed()) return cmd_gen_data(cfg, labels_out);
        if (tenc->parsed()) return cmd_train_encoder(cfg);
        if (tpri->parsed()) return cmd_train_prior(cfg, pixel);
        if (atk->parsed()) return cmd_attack(cfg, defended);
        if (pur->parsed()) return cmd_purify(cfg, sample);
        if (ev->parsed()) return cmd_eval(cfg, force, ci);
        if (rsk->parsed()) return cmd_risk(cfg, estimator);
        if (swp->parsed()) return cmd_sweep(cfg, family, force);
        if (rep->parsed()) return cmd_report(cfg, hash);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    }
    return 0;
}
