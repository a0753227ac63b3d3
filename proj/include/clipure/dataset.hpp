#pragma once

// Procedurally rendered glyph dataset: colored shapes on a noisy background,
// captioned "a photo of a <color> <shape>". Fully determined by
// (seed, N, K, H, W); regeneration is bit-identical.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/rng.hpp"
#include "clipure/templates.hpp"

namespace clipure {

struct UnknownToken : std::runtime_error {
    explicit UnknownToken(const std::string& tok)
        : std::runtime_error("unknown token: '" + tok + "'") {}
};

inline const std::vector<std::string>& glyph_colors() {
    static const std::vector<std::string> c = {"red", "green", "blue", "yellow", "magenta"};
    return c;
}

inline const std::vector<std::string>& glyph_shapes() {
    static const std::vector<std::string> s = {"circle", "square", "triangle", "cross", "ring"};
    return s;
}

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else if (ch == '.' || ch == ',' || ch == '!' || ch == '?') {
            flush();
            out.push_back(std::string(1, ch));
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return out;
}

// Expand a prompt template; the slot is `{}`. An empty class name yields the
// blank form of the template.
inline std::string expand_template(const std::string& tmpl, const std::string& class_name) {
    auto pos = tmpl.find("{}");
    if (pos == std::string::npos)
        throw std::runtime_error("template has no {} slot: " + tmpl);
    std::string out = tmpl.substr(0, pos) + class_name + tmpl.substr(pos + 2);
    return out;
}

class Vocab {
public:
    // Fixed vocabulary covering the caption grammar and both builtin
    // template fixtures; sorted so the id assignment is deterministic.
    static const Vocab& standard() {
        static const Vocab v = build();
        return v;
    }

    int id(const std::string& tok) const {
        auto it = ids_.find(tok);
        if (it == ids_.end()) throw UnknownToken(tok);
        return it->second;
    }
    bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out;
        for (const auto& tok : tokenize(text)) out.push_back(id(tok));
        return out;
    }

private:
    static Vocab build() {
        std::set<std::string> words;
        auto add_text = [&](const std::string& s) {
            for (const auto& t : tokenize(s)) words.insert(t);
        };
        for (const auto& c : glyph_colors()) words.insert(c);
        for (const auto& s : glyph_shapes()) words.insert(s);
        add_text("a photo of a thing");
        for (const auto& t : templates_80()) add_text(expand_template(t, ""));
        for (const auto& t : templates_fast()) add_text(expand_template(t, ""));
        Vocab v;
        for (const auto& w : words) {
            v.ids_[w] = static_cast<int>(v.tokens_.size());
            v.tokens_.push_back(w);
        }
        return v;
    }

    std::map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

struct GlyphDataset {
    int n = 0, channels = 3, height = 0, width = 0, num_classes = 0;
    std::vector<std::vector<float>> images;  // each C*H*W in [0,1], row-major C,H,W
    std::vector<int> labels;
    std::vector<std::string> class_names;        // "<color> <shape>"
    std::vector<std::vector<int>> captions;      // token ids

    std::size_t pixels() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
};

namespace detail {

inline void render_glyph(std::vector<float>& img, int H, int W, int shape, const float rgb[3],
                         Rng& rng) {
    double cx = W / 2.0 + rng.uniform(-3.0, 3.0);
    double cy = H / 2.0 + rng.uniform(-3.0, 3.0);
    double r = rng.uniform(0.28, 0.40) * std::min(H, W) / 2.0 * 2.0;  // ~4.5..6.5 at 32px
    double intensity = rng.uniform(0.30, 0.50);
    auto inside = [&](double x, double y) -> bool {
        double dx = x - cx, dy = y - cy;
        switch (shape) {
            case 0:  // circle
                return dx * dx + dy * dy <= r * r;
            case 1:  // square
                return std::abs(dx) <= r * 0.9 && std::abs(dy) <= r * 0.9;
            case 2:  // triangle (upward)
                return dy <= r * 0.8 && dy >= -r * 0.8 &&
                       std::abs(dx) <= (dy + r * 0.8) * 0.62;
            case 3:  // cross
                return (std::abs(dx) <= r * 0.33 && std::abs(dy) <= r) ||
                       (std::abs(dy) <= r * 0.33 && std::abs(dx) <= r);
            case 4:  // ring
            {
                double d2 = dx * dx + dy * dy;
                return d2 <= r * r && d2 >= r * r * 0.30;
            }
            default:
                return false;
        }
    };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (inside(x + 0.5, y + 0.5))
                for (int c = 0; c < 3; ++c) {
                    float v = static_cast<float>(rgb[c] * intensity);
                    img[static_cast<std::size_t>(c) * H * W + static_cast<std::size_t>(y) * W + x] =
                        std::min(1.0f, std::max(0.0f, v));
                }
}

}  // namespace detail

inline GlyphDataset generate_dataset(std::uint64_t seed, int n, int k, int h, int w) {
    const int max_k = static_cast<int>(glyph_colors().size() * glyph_shapes().size());
    if (k < 1 || k > max_k)
        throw std::runtime_error("generate_dataset: K must be in [1, " + std::to_string(max_k) + "]");
    if (h < 16 || w < 16) throw std::runtime_error("generate_dataset: H and W must be >= 16");
    if (n < 0) throw std::runtime_error("generate_dataset: N must be >= 0");

    static const float rgb_table[5][3] = {
        {1.0f, 0.15f, 0.15f},  // red
        {0.15f, 0.9f, 0.2f},   // green
        {0.2f, 0.4f, 1.0f},    // blue
        {1.0f, 0.95f, 0.2f},   // yellow
        {1.0f, 0.2f, 1.0f},    // magenta
    };

    GlyphDataset ds;
    ds.n = n;
    ds.height = h;
    ds.width = w;
    ds.num_classes = k;
    const auto& vocab = Vocab::standard();
    const int ns = static_cast<int>(glyph_shapes().size());
    for (int c = 0; c < k; ++c) {
        int shape = c % ns;
        int color = c / ns;
        ds.class_names.push_back(glyph_colors()[color] + " " + glyph_shapes()[shape]);
    }
    ds.images.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int label = i % k;
        int shape = label % ns;
        int color = label / ns;
        Rng rng(seed, "glyph-sample", static_cast<std::uint64_t>(i));
        std::vector<float> img(ds.pixels());
        for (auto& px : img) px = static_cast<float>(rng.uniform(0.0, 0.10));
        detail::render_glyph(img, h, w, shape, rgb_table[color], rng);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(label);
        ds.captions.push_back(vocab.encode("a photo of a " + ds.class_names[label]));
    }
    return ds;
}

}  // namespace clipure
