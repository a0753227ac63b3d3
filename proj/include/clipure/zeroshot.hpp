#pragma once

// Zero-shot head: per-class text embeddings averaged over prompt templates,
// classification by maximum cosine similarity. Ties break to the lowest
// class index.

#include <functional>
#include <string>
#include <vector>

#include "clipure/dataset.hpp"
#include "clipure/encoder.hpp"
#include "clipure/tensor.hpp"

namespace clipure {

template <typename T>
struct ClassBank {
    std::vector<std::string> class_names;
    std::vector<Tensor<T>> class_embeddings;  // K rows, detached
    Tensor<T> blank_embedding;                // from templates with the slot emptied
};

template <typename T>
ClassBank<T> build_bank(const DualEncoder<T>& enc, const std::vector<std::string>& classes,
                        const std::vector<std::string>& templates) {
    if (classes.size() < 1) throw std::runtime_error("build_bank: need at least one class");
    if (templates.empty()) throw std::runtime_error("build_bank: need at least one template");
    NoGradGuard ng;
    ClassBank<T> bank;
    bank.class_names = classes;
    auto mean_encoding = [&](const std::string& cls) {
        std::vector<T> acc(static_cast<std::size_t>(enc.dim()), T(0));
        for (const auto& tmpl : templates) {
            Tensor<T> z = enc.encode_text(expand_template(tmpl, cls));
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += z.data()[i];
        }
        T inv = T(1) / static_cast<T>(templates.size());
        for (auto& v : acc) v *= inv;
        return Tensor<T>::vec(std::move(acc));
    };
    for (const auto& cls : classes) bank.class_embeddings.push_back(mean_encoding(cls));
    bank.blank_embedding = mean_encoding("");
    return bank;
}

// Cosine scores of z against every class row, on the tape (for attack losses).
template <typename T>
std::vector<Tensor<T>> class_scores(const Tensor<T>& z, const ClassBank<T>& bank) {
    std::vector<Tensor<T>> scores;
    scores.reserve(bank.class_embeddings.size());
    for (const auto& row : bank.class_embeddings) scores.push_back(cosine(z, row));
    return scores;
}

template <typename T>
struct Classification {
    int label = -1;
    std::vector<T> scores;
    T margin = 0;  // top score minus runner-up
};

template <typename T>
Classification<T> classify(const Tensor<T>& z, const ClassBank<T>& bank) {
    NoGradGuard ng;
    Classification<T> out;
    Tensor<T> zd = z.detach();
    out.scores.reserve(bank.class_embeddings.size());
    for (const auto& row : bank.class_embeddings)
        out.scores.push_back(cosine(zd, row).item());
    out.label = 0;
    for (std::size_t c = 1; c < out.scores.size(); ++c)
        if (out.scores[c] > out.scores[out.label]) out.label = static_cast<int>(c);
    T runner_up = -2;
    for (std::size_t c = 0; c < out.scores.size(); ++c)
        if (static_cast<int>(c) != out.label && out.scores[c] > runner_up)
            runner_up = out.scores[c];
    out.margin = out.scores.size() > 1 ? out.scores[static_cast<std::size_t>(out.label)] - runner_up
                                       : T(0);
    return out;
}

struct SampleRecord {
    int sample_id = 0;
    int true_label = 0;
    int predicted = 0;
    double margin = 0;
    int purify_steps = 0;
};

template <typename T>
struct EvalResult {
    double accuracy = 0;
    std::vector<SampleRecord> records;
};

// Accuracy of the zero-shot head over (image, label) pairs, with an optional
// embedding preprocessor (the purifier plugs in here).
template <typename T>
EvalResult<T> evaluate(const DualEncoder<T>& enc, const ClassBank<T>& bank,
                       const std::vector<std::vector<float>>& images,
                       const std::vector<int>& labels,
                       const std::function<Tensor<T>(const Tensor<T>&, int)>& preprocess = {},
                       int purify_steps = 0) {
    if (images.empty()) throw std::runtime_error("evaluate: empty dataset");
    if (images.size() != labels.size()) throw std::runtime_error("evaluate: images/labels mismatch");
    NoGradGuard ng;
    EvalResult<T> out;
    int correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::vector<T> px(images[i].begin(), images[i].end());
        Tensor<T> z = enc.encode_image(Tensor<T>::vec(std::move(px)));
        if (preprocess) z = preprocess(z, static_cast<int>(i));
        auto cls = classify(z, bank);
        if (cls.label == labels[i]) ++correct;
        out.records.push_back({static_cast<int>(i), labels[i], cls.label,
                               static_cast<double>(cls.margin), purify_steps});
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
    return out;
}

}  // namespace clipure
