#pragma once

// Experiment orchestration: a flat key=value configuration covering every
// stage, content-addressed run directories, the full train -> attack ->
// purify -> evaluate pipeline, and CSV/JSON emission for plots and reports.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "clipure/attack.hpp"
#include "clipure/dataset.hpp"
#include "clipure/diffprior.hpp"
#include "clipure/encoder.hpp"
#include "clipure/purifier.hpp"
#include "clipure/riskbench.hpp"
#include "clipure/templates.hpp"
#include "clipure/zeroshot.hpp"
#include "json.hpp"

namespace clipure {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct ExperimentConfig {
    // dataset
    std::uint64_t seed = 17;
    int data_n = 4096;
    int data_k = 10;
    int data_h = 32;
    int data_w = 32;
    // encoder + training
    EncoderConfig encoder;
    TrainConfig train;
    // zero-shot head
    std::string templates = "fast";  // fast | full | path to a template file
    // attack
    AttackConfig attack;
    // purifier
    PurifyConfig purify;
    // prior
    PriorTrainConfig prior_train;
    int prior_hidden = 128;
    // evaluation
    int eval_samples = 1024;
    int workers = 0;  // 0: hardware concurrency
    std::string out_dir = "runs";

    // Flat key table; every key is settable from the config file and the CLI.
    void set(const std::string& key, const std::string& value) {
        auto as_int = [&] {
            try {
                std::size_t pos = 0;
                int v = std::stoi(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' needs an integer, got '" + value + "'");
            }
        };
        auto as_u64 = [&] {
            try {
                std::size_t pos = 0;
                std::uint64_t v = std::stoull(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' needs an unsigned integer, got '" + value + "'");
            }
        };
        auto as_double = [&] {
            try {
                std::size_t pos = 0;
                double v = std::stod(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' needs a number, got '" + value + "'");
            }
        };
        if (key == "data.seed") seed = as_u64();
        else if (key == "data.n") data_n = as_int();
        else if (key == "data.k") data_k = as_int();
        else if (key == "data.h") data_h = as_int();
        else if (key == "data.w") data_w = as_int();
        else if (key == "encoder.dim") encoder.dim = as_int();
        else if (key == "encoder.image_hidden") encoder.image_hidden = as_int();
        else if (key == "encoder.text_hidden") encoder.text_hidden = as_int();
        else if (key == "encoder.token_dim") encoder.token_dim = as_int();
        else if (key == "encoder.tau") encoder.tau = as_double();
        else if (key == "encoder.anisotropy") encoder.anisotropy = as_double();
        else if (key == "train.epochs") train.epochs = as_int();
        else if (key == "train.lr") train.lr = as_double();
        else if (key == "train.batch") train.batch = as_int();
        else if (key == "train.momentum") train.momentum = as_double();
        else if (key == "zeroshot.templates") templates = value;
        else if (key == "attack.norm") {
            if (value == "linf") attack.norm = AttackNorm::Linf;
            else if (value == "l2") attack.norm = AttackNorm::L2;
            else throw ConfigError("attack.norm must be linf or l2, got '" + value + "'");
        }
        else if (key == "attack.eps") attack.eps = as_double();
        else if (key == "attack.alpha") attack.alpha = as_double();
        else if (key == "attack.iters") attack.iters = as_int();
        else if (key == "attack.sigma") attack.sigma = as_double();
        else if (key == "attack.eot_samples") attack.eot_samples = as_int();
        else if (key == "attack.mode") {
            if (value == "direct") attack.mode = AttackMode::Direct;
            else if (value == "adaptive") attack.mode = AttackMode::Adaptive;
            else if (value == "bpda") attack.mode = AttackMode::Bpda;
            else throw ConfigError("attack.mode must be direct, adaptive or bpda, got '" + value + "'");
        }
        else if (key == "purify.variant") {
            if (value == "cos") purify.variant = PurifyVariant::Cos;
            else if (value == "diff") purify.variant = PurifyVariant::Diff;
            else throw ConfigError("purify.variant must be cos or diff, got '" + value + "'");
        }
        else if (key == "purify.steps") purify.steps = as_int();
        else if (key == "purify.eta") purify.eta = as_double();
        else if (key == "purify.t_lo") purify.t_lo = as_int();
        else if (key == "purify.t_hi") purify.t_hi = as_int();
        else if (key == "purify.guidance_weight") purify.guidance_weight = as_double();
        else if (key == "purify.guidance_start") purify.guidance_start = as_int();
        else if (key == "purify.literal_polar") purify.literal_polar = as_int() != 0;
        else if (key == "prior.epochs") prior_train.epochs = as_int();
        else if (key == "prior.batch") prior_train.batch = as_int();
        else if (key == "prior.lr") prior_train.lr = as_double();
        else if (key == "prior.momentum") prior_train.momentum = as_double();
        else if (key == "prior.hidden") prior_hidden = as_int();
        else if (key == "eval.samples") eval_samples = as_int();
        else if (key == "eval.workers") workers = as_int();
        else if (key == "out.dir") out_dir = value;
        else throw ConfigError("unknown key '" + key + "'");
    }

    // Canonical flat serialization; also the hashing basis. out.dir and
    // eval.workers are excluded: they change where/how a run executes, not
    // what it computes.
    std::vector<std::pair<std::string, std::string>> items() const {
        auto fmt = [](double v) {
            std::ostringstream os;
            os << v;
            return os.str();
        };
        std::vector<std::pair<std::string, std::string>> kv;
        kv.emplace_back("data.seed", std::to_string(seed));
        kv.emplace_back("data.n", std::to_string(data_n));
        kv.emplace_back("data.k", std::to_string(data_k));
        kv.emplace_back("data.h", std::to_string(data_h));
        kv.emplace_back("data.w", std::to_string(data_w));
        kv.emplace_back("encoder.dim", std::to_string(encoder.dim));
        kv.emplace_back("encoder.image_hidden", std::to_string(encoder.image_hidden));
        kv.emplace_back("encoder.text_hidden", std::to_string(encoder.text_hidden));
        kv.emplace_back("encoder.token_dim", std::to_string(encoder.token_dim));
        kv.emplace_back("encoder.tau", fmt(encoder.tau));
        kv.emplace_back("encoder.anisotropy", fmt(encoder.anisotropy));
        kv.emplace_back("train.epochs", std::to_string(train.epochs));
        kv.emplace_back("train.lr", fmt(train.lr));
        kv.emplace_back("train.batch", std::to_string(train.batch));
        kv.emplace_back("train.momentum", fmt(train.momentum));
        kv.emplace_back("zeroshot.templates", templates);
        kv.emplace_back("attack.norm", attack.norm == AttackNorm::Linf ? "linf" : "l2");
        kv.emplace_back("attack.eps", fmt(attack.eps));
        kv.emplace_back("attack.alpha", fmt(attack.alpha));
        kv.emplace_back("attack.iters", std::to_string(attack.iters));
        kv.emplace_back("attack.sigma", fmt(attack.sigma));
        kv.emplace_back("attack.eot_samples", std::to_string(attack.eot_samples));
        kv.emplace_back("attack.mode", attack.mode == AttackMode::Direct     ? "direct"
                                       : attack.mode == AttackMode::Adaptive ? "adaptive"
                                                                             : "bpda");
        kv.emplace_back("purify.variant", purify.variant == PurifyVariant::Cos ? "cos" : "diff");
        kv.emplace_back("purify.steps", std::to_string(purify.steps));
        kv.emplace_back("purify.eta", fmt(purify.eta));
        kv.emplace_back("purify.t_lo", std::to_string(purify.t_lo));
        kv.emplace_back("purify.t_hi", std::to_string(purify.t_hi));
        kv.emplace_back("purify.guidance_weight", fmt(purify.guidance_weight));
        kv.emplace_back("purify.guidance_start", std::to_string(purify.guidance_start));
        kv.emplace_back("purify.literal_polar", purify.literal_polar ? "1" : "0");
        kv.emplace_back("prior.epochs", std::to_string(prior_train.epochs));
        kv.emplace_back("prior.batch", std::to_string(prior_train.batch));
        kv.emplace_back("prior.lr", fmt(prior_train.lr));
        kv.emplace_back("prior.momentum", fmt(prior_train.momentum));
        kv.emplace_back("prior.hidden", std::to_string(prior_hidden));
        kv.emplace_back("eval.samples", std::to_string(eval_samples));
        return kv;
    }

    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [k, v] : items()) h = fnv1a(v, fnv1a(k, h));
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }

    std::vector<std::string> resolve_templates() const {
        if (templates == "fast") return templates_fast();
        if (templates == "full") return templates_80();
        return load_templates(templates);
    }

    int resolve_workers() const {
        if (workers > 0) return workers;
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 4 : static_cast<int>(hc);
    }
};

// Plain-text config: key=value lines grouped under [section] headers; a
// line "a=b" under [attack] sets key "attack.a". '#' starts a comment.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key=value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        cfg.set(key, value);
    }
    return cfg;
}

struct StageError : std::runtime_error {
    StageError(const std::string& stage, std::uint64_t seed, const std::string& what)
        : std::runtime_error("stage '" + stage + "' (seed " + std::to_string(seed) + "): " + what) {}
};

struct RunReport {
    std::string config_hash;
    double clean_accuracy = 0;
    double defended_clean_accuracy = 0;
    double undefended_robust_accuracy = 0;
    double defended_robust_accuracy = 0;   // attack crafted on the defended pipeline
    double transfer_robust_accuracy = 0;   // undefended adversarial examples, defended eval
    double train_loss_first = 0, train_loss_last = 0;
    double classify_only_seconds = 0;      // per 100 samples
    double classify_purify_seconds = 0;    // per 100 samples
    double total_seconds = 0;
    std::vector<SampleRecord> clean_records, undefended_records, defended_records;
    std::vector<std::pair<std::string, std::string>> config;

    nlohmann::json to_json(bool include_timings = true) const {
        nlohmann::json j;
        j["config_hash"] = config_hash;
        j["clean_accuracy"] = clean_accuracy;
        j["defended_clean_accuracy"] = defended_clean_accuracy;
        j["undefended_robust_accuracy"] = undefended_robust_accuracy;
        j["defended_robust_accuracy"] = defended_robust_accuracy;
        j["transfer_robust_accuracy"] = transfer_robust_accuracy;
        j["train_loss_first"] = train_loss_first;
        j["train_loss_last"] = train_loss_last;
        nlohmann::json cfg = nlohmann::json::object();
        for (const auto& [k, v] : config) cfg[k] = v;
        j["config"] = cfg;
        if (include_timings) {
            j["timings"] = {{"classify_only_seconds", classify_only_seconds},
                            {"classify_purify_seconds", classify_purify_seconds},
                            {"total_seconds", total_seconds}};
        }
        auto records = [](const std::vector<SampleRecord>& rs) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& r : rs)
                a.push_back({{"id", r.sample_id}, {"true", r.true_label}, {"pred", r.predicted}});
            return a;
        };
        j["n_records"] = clean_records.size();
        (void)records;  // per-sample data lives in samples.csv
        return j;
    }
};

namespace detail {

// Bounded worker pool over sample indices; results land in pre-sized slots,
// so no synchronization beyond the shared counter is needed.
inline void parallel_for(int n, int workers, const std::function<void(int)>& body) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    int n_threads = std::min(workers, n);
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline void write_samples_csv(const std::string& path, const RunReport& r) {
    std::ofstream out(path);
    out << "stage,sample_id,true,pred,margin,purify_steps\n";
    auto dump = [&](const char* stage, const std::vector<SampleRecord>& rs) {
        for (const auto& rec : rs)
            out << stage << "," << rec.sample_id << "," << rec.true_label << "," << rec.predicted
                << "," << rec.margin << "," << rec.purify_steps << "\n";
    };
    dump("clean", r.clean_records);
    dump("undefended_adv", r.undefended_records);
    dump("defended_adv", r.defended_records);
}

}  // namespace detail

// The full pipeline on one config. Artifacts land in
// <out_dir>/<config-hash>/{report.json, samples.csv, checkpoints/}; an
// existing report makes the run a no-op unless forced.
template <typename T = float>
RunReport run(const ExperimentConfig& cfg, bool force = false, bool persist = true) {
    namespace fs = std::filesystem;
    auto t_start = std::chrono::steady_clock::now();
    RunReport report;
    report.config_hash = cfg.hash();
    report.config = cfg.items();

    fs::path run_dir = fs::path(cfg.out_dir) / report.config_hash;
    fs::path report_path = run_dir / "report.json";
    if (persist && !force && fs::exists(report_path)) {
        std::ifstream in(report_path);
        nlohmann::json j;
        in >> j;
        report.clean_accuracy = j["clean_accuracy"];
        report.defended_clean_accuracy = j["defended_clean_accuracy"];
        report.undefended_robust_accuracy = j["undefended_robust_accuracy"];
        report.defended_robust_accuracy = j["defended_robust_accuracy"];
        report.transfer_robust_accuracy = j["transfer_robust_accuracy"];
        report.train_loss_first = j["train_loss_first"];
        report.train_loss_last = j["train_loss_last"];
        return report;
    }

    // data: one deterministic corpus, training split first, evaluation after
    GlyphDataset full;
    try {
        full = generate_dataset(cfg.seed, cfg.data_n + cfg.eval_samples, cfg.data_k, cfg.data_h,
                                cfg.data_w);
    } catch (const std::exception& e) {
        throw StageError("gen-data", cfg.seed, e.what());
    }
    GlyphDataset train_ds = full;
    train_ds.n = cfg.data_n;
    train_ds.images.resize(static_cast<std::size_t>(cfg.data_n));
    train_ds.labels.resize(static_cast<std::size_t>(cfg.data_n));
    train_ds.captions.resize(static_cast<std::size_t>(cfg.data_n));
    std::vector<std::vector<float>> eval_imgs(full.images.begin() + cfg.data_n, full.images.end());
    std::vector<int> eval_labels(full.labels.begin() + cfg.data_n, full.labels.end());

    DualEncoder<T> enc(cfg.encoder, 3 * cfg.data_h * cfg.data_w, cfg.seed);
    try {
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        auto curve = train_encoder(enc, train_ds, tc);
        if (!curve.epoch_loss.empty()) {
            report.train_loss_first = curve.epoch_loss.front();
            report.train_loss_last = curve.epoch_loss.back();
        }
    } catch (const std::exception& e) {
        throw StageError("train-encoder", cfg.seed, e.what());
    }

    ClassBank<T> bank = build_bank(enc, full.class_names, cfg.resolve_templates());

    DiffPrior<T> prior;
    bool need_prior = cfg.purify.variant == PurifyVariant::Diff && cfg.purify.steps > 0;
    if (need_prior) {
        try {
            prior = DiffPrior<T>(cfg.encoder.dim, cfg.encoder.dim, cfg.prior_hidden,
                                 NoiseSchedule::cosine(100), cfg.seed);
            std::vector<std::vector<T>> corpus;
            {
                NoGradGuard ng;
                for (int i = 0; i < train_ds.n; ++i) {
                    std::vector<T> px(train_ds.images[i].begin(), train_ds.images[i].end());
                    corpus.push_back(enc.encode_image(Tensor<T>::vec(std::move(px))).data());
                }
            }
            PriorTrainConfig pc = cfg.prior_train;
            pc.seed = cfg.seed;
            train_prior(prior, corpus, bank.blank_embedding, pc);
        } catch (const std::exception& e) {
            throw StageError("train-prior", cfg.seed, e.what());
        }
    }

    const int n_eval = cfg.eval_samples;
    const int workers = cfg.resolve_workers();
    // frozen views: parameter nodes stop tracking gradients, so the worker
    // threads' backward passes never touch shared state
    DualEncoder<T> enc_inf = enc.frozen();
    DiffPrior<T> prior_inf = need_prior ? prior.frozen() : DiffPrior<T>();
    Pipeline<T> undefended{&enc_inf, &bank, nullptr, nullptr};
    PurifyConfig pure_cfg = cfg.purify;
    pure_cfg.seed = cfg.seed;
    Pipeline<T> defended{&enc_inf, &bank, &pure_cfg, need_prior ? &prior_inf : nullptr};

    report.clean_records.resize(static_cast<std::size_t>(n_eval));
    report.undefended_records.resize(static_cast<std::size_t>(n_eval));
    report.defended_records.resize(static_cast<std::size_t>(n_eval));
    std::vector<int> clean_def_ok(static_cast<std::size_t>(n_eval), 0);
    std::vector<int> transfer_ok(static_cast<std::size_t>(n_eval), 0);

    AttackConfig atk_direct = cfg.attack;
    atk_direct.mode = AttackMode::Direct;
    AttackConfig atk_def = cfg.attack;

    try {
        detail::parallel_for(n_eval, workers, [&](int i) {
            std::vector<T> x0(eval_imgs[static_cast<std::size_t>(i)].begin(),
                              eval_imgs[static_cast<std::size_t>(i)].end());
            int y = eval_labels[static_cast<std::size_t>(i)];
            std::uint64_t sample_seed = substream(cfg.seed, "attack-sample",
                                                  static_cast<std::uint64_t>(i));
            std::uint64_t purify_seed = substream(cfg.seed, "purify-sample",
                                                  static_cast<std::uint64_t>(i));
            auto clean_cls = undefended.predict(x0, purify_seed);
            report.clean_records[static_cast<std::size_t>(i)] =
                {i, y, clean_cls.label, static_cast<double>(clean_cls.margin), 0};
            clean_def_ok[static_cast<std::size_t>(i)] =
                defended.predict(x0, purify_seed).label == y;

            auto x_undef = pgd(x0, y, undefended, atk_direct, sample_seed);
            auto undef_cls = undefended.predict(x_undef, purify_seed);
            report.undefended_records[static_cast<std::size_t>(i)] =
                {i, y, undef_cls.label, static_cast<double>(undef_cls.margin), 0};
            transfer_ok[static_cast<std::size_t>(i)] =
                defended.predict(x_undef, purify_seed).label == y;

            if (cfg.purify.steps > 0) {
                auto x_def = pgd(x0, y, defended, atk_def, sample_seed);
                auto def_cls = defended.predict(x_def, purify_seed);
                report.defended_records[static_cast<std::size_t>(i)] =
                    {i, y, def_cls.label, static_cast<double>(def_cls.margin), cfg.purify.steps};
            } else {
                report.defended_records[static_cast<std::size_t>(i)] =
                    report.undefended_records[static_cast<std::size_t>(i)];
            }
        });
    } catch (const NumericError& e) {
        throw StageError("attack-eval", cfg.seed, e.what());
    }

    auto accuracy = [&](const std::vector<SampleRecord>& rs) {
        int ok = 0;
        for (const auto& r : rs) ok += r.predicted == r.true_label;
        return static_cast<double>(ok) / static_cast<double>(rs.size());
    };
    auto frac = [&](const std::vector<int>& v) {
        int ok = 0;
        for (int b : v) ok += b;
        return static_cast<double>(ok) / static_cast<double>(v.size());
    };
    report.clean_accuracy = accuracy(report.clean_records);
    report.undefended_robust_accuracy = accuracy(report.undefended_records);
    report.defended_robust_accuracy = accuracy(report.defended_records);
    report.defended_clean_accuracy = frac(clean_def_ok);
    report.transfer_robust_accuracy = frac(transfer_ok);

    // timing probe: 100 samples, classify-only vs classify+purify
    {
        int n_time = std::min(100, n_eval);
        auto t1 = std::chrono::steady_clock::now();
        for (int i = 0; i < n_time; ++i)
            undefended.predict(std::vector<T>(eval_imgs[static_cast<std::size_t>(i)].begin(),
                                              eval_imgs[static_cast<std::size_t>(i)].end()), 0);
        auto t2 = std::chrono::steady_clock::now();
        for (int i = 0; i < n_time; ++i)
            defended.predict(std::vector<T>(eval_imgs[static_cast<std::size_t>(i)].begin(),
                                            eval_imgs[static_cast<std::size_t>(i)].end()), 0);
        auto t3 = std::chrono::steady_clock::now();
        report.classify_only_seconds = std::chrono::duration<double>(t2 - t1).count();
        report.classify_purify_seconds = std::chrono::duration<double>(t3 - t2).count();
    }
    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    if (persist) {
        fs::create_directories(run_dir / "checkpoints");
        enc.save((run_dir / "checkpoints" / "encoder.bin").string());
        if (need_prior) prior.save((run_dir / "checkpoints" / "prior.bin").string());
        detail::write_samples_csv((run_dir / "samples.csv").string(), report);
        std::ofstream out(report_path);
        out << report.to_json().dump(2) << "\n";
    }
    return report;
}

// One CSV per figure family; every file documents its columns in a header
// comment line.
inline void emit_eta_sweep_csv(const std::string& path,
                               const std::vector<std::pair<double, RunReport>>& rows) {
    if (rows.empty()) throw std::runtime_error("emit_plots: empty report set");
    std::ofstream out(path);
    out << "# eta,defended_clean_accuracy,defended_robust_accuracy,transfer_robust_accuracy\n";
    out << "eta,defended_clean_accuracy,defended_robust_accuracy,transfer_robust_accuracy\n";
    for (const auto& [eta, r] : rows)
        out << eta << "," << r.defended_clean_accuracy << "," << r.defended_robust_accuracy << ","
            << r.transfer_robust_accuracy << "\n";
}

inline void emit_eps_sweep_csv(const std::string& path,
                               const std::vector<std::pair<double, RunReport>>& rows) {
    if (rows.empty()) throw std::runtime_error("emit_plots: empty report set");
    std::ofstream out(path);
    out << "# eps,clean_accuracy,undefended_robust_accuracy,defended_robust_accuracy\n";
    out << "eps,clean_accuracy,undefended_robust_accuracy,defended_robust_accuracy\n";
    for (const auto& [eps, r] : rows)
        out << eps << "," << r.clean_accuracy << "," << r.undefended_robust_accuracy << ","
            << r.defended_robust_accuracy << "\n";
}

inline void emit_guidance_sweep_csv(const std::string& path,
                                    const std::vector<std::pair<double, RunReport>>& rows) {
    if (rows.empty()) throw std::runtime_error("emit_plots: empty report set");
    std::ofstream out(path);
    out << "# guidance_weight,defended_clean_accuracy,defended_robust_accuracy\n";
    out << "guidance_weight,defended_clean_accuracy,defended_robust_accuracy\n";
    for (const auto& [w, r] : rows)
        out << w << "," << r.defended_clean_accuracy << "," << r.defended_robust_accuracy << "\n";
}

inline void emit_kl_histogram_csv(const std::string& path, const std::string& estimator,
                                  const HistogramPair& h) {
    std::ofstream out(path);
    out << "# estimator,bin_lo,bin_hi,count_adv,count_ben\n";
    out << "estimator,bin_lo,bin_hi,count_adv,count_ben\n";
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
        out << estimator << "," << h.edges[b] << "," << h.edges[b + 1] << "," << h.counts_adv[b]
            << "," << h.counts_ben[b] << "\n";
}

}  // namespace clipure
