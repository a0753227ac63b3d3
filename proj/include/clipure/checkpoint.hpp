#pragma once

// Little-endian binary checkpoint: magic tag, format version, embedding
// dimension, then a layer table of (name, shape, raw float payload).
// The dual encoder writes tag "CLPR", the diffusion prior "PRIR".

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipure/tensor.hpp"

namespace clipure {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg)
        : std::runtime_error("checkpoint: " + msg) {}
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("truncated file");
    return v;
}

}  // namespace detail

template <typename T>
struct Checkpoint {
    std::string magic;  // 4 chars
    std::uint32_t dim = 0;
    // Insertion-ordered layer table.
    std::vector<std::pair<std::string, Tensor<T>>> layers;

    void add(const std::string& name, const Tensor<T>& t) { layers.emplace_back(name, t); }

    const Tensor<T>& get(const std::string& name) const {
        for (const auto& [n, t] : layers)
            if (n == name) return t;
        throw CheckpointError("missing layer: " + name);
    }

    void save(const std::string& path) const {
        if (magic.size() != 4) throw CheckpointError("magic must be 4 bytes");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw CheckpointError("cannot open for writing: " + path);
        out.write(magic.data(), 4);
        detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
        detail::write_pod<std::uint32_t>(out, dim);
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sizeof(T)));
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
        for (const auto& [name, t] : layers) {
            detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
            for (int d : t.shape()) detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
            out.write(reinterpret_cast<const char*>(t.data().data()),
                      static_cast<std::streamsize>(t.size() * sizeof(T)));
        }
        if (!out) throw CheckpointError("write failed: " + path);
    }

    static Checkpoint load(const std::string& path, const std::string& expect_magic) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open: " + path);
        char magic[4];
        in.read(magic, 4);
        if (!in) throw CheckpointError("truncated file");
        Checkpoint ck;
        ck.magic.assign(magic, 4);
        if (ck.magic != expect_magic)
            throw CheckpointError("bad magic '" + ck.magic + "', expected '" + expect_magic + "'");
        auto version = detail::read_pod<std::uint32_t>(in);
        if (version != kCheckpointVersion)
            throw CheckpointError("unsupported version " + std::to_string(version));
        ck.dim = detail::read_pod<std::uint32_t>(in);
        auto dtype = detail::read_pod<std::uint32_t>(in);
        auto count = detail::read_pod<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < count; ++i) {
            auto name_len = detail::read_pod<std::uint32_t>(in);
            std::string name(name_len, '\0');
            in.read(name.data(), name_len);
            auto ndim = detail::read_pod<std::uint32_t>(in);
            std::vector<int> shape;
            std::size_t total = 1;
            for (std::uint32_t d = 0; d < ndim; ++d) {
                auto s = detail::read_pod<std::uint32_t>(in);
                shape.push_back(static_cast<int>(s));
                total *= s;
            }
            std::vector<T> data(total);
            if (dtype == sizeof(T)) {
                in.read(reinterpret_cast<char*>(data.data()),
                        static_cast<std::streamsize>(total * sizeof(T)));
            } else if (dtype == sizeof(float)) {
                std::vector<float> raw(total);
                in.read(reinterpret_cast<char*>(raw.data()),
                        static_cast<std::streamsize>(total * sizeof(float)));
                for (std::size_t j = 0; j < total; ++j) data[j] = static_cast<T>(raw[j]);
            } else if (dtype == sizeof(double)) {
                std::vector<double> raw(total);
                in.read(reinterpret_cast<char*>(raw.data()),
                        static_cast<std::streamsize>(total * sizeof(double)));
                for (std::size_t j = 0; j < total; ++j) data[j] = static_cast<T>(raw[j]);
            } else {
                throw CheckpointError("unsupported dtype size " + std::to_string(dtype));
            }
            if (!in) throw CheckpointError("truncated layer payload");
            ck.layers.emplace_back(name, Tensor<T>(shape, std::move(data)));
        }
        return ck;
    }
};

}  // namespace clipure
