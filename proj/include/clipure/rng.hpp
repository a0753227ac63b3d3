#pragma once

// All randomness flows from one root seed through named substreams, so a
// stage can be re-run in isolation without disturbing the others.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace clipure {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed for substream `name` of stream `seed`, optionally indexed (e.g. one
// stream per sample).
inline std::uint64_t substream(std::uint64_t seed, const std::string& name, std::uint64_t index = 0) {
    return splitmix64(fnv1a(name, splitmix64(seed)) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, const std::string& name, std::uint64_t index = 0)
        : engine_(substream(seed, name, index)) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double gaussian(double mu = 0.0, double sigma = 1.0) {
        return std::normal_distribution<double>(mu, sigma)(engine_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    template <typename T>
    std::vector<T> gaussian_vec(std::size_t n, double sigma = 1.0) {
        std::vector<T> out(n);
        for (auto& v : out) v = static_cast<T>(gaussian(0.0, sigma));
        return out;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace clipure
