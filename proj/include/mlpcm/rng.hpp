// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace mlpcm {

// Deterministic random stream. mt19937_64 plus hand-rolled uniform/normal
// transforms so sequences are identical across standard libraries
// (std::normal_distribution is implementation-defined; Box-Muller is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : engine_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)), seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        auto v = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }

    // Standard normal via Box-Muller, pairs cached.
    float normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = static_cast<float>(r * std::sin(a));
        has_cached_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    void fill_normal(std::span<float> out) {
        for (auto& v : out) v = normal();
    }

    // Independent child stream, a pure function of (construction seed, id).
    Rng stream(std::uint64_t id) const {
        return Rng(splitmix64(seed_ + (id + 1) * 0x9e3779b97f4a7c15ULL));
    }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_cached_ = false;
    float cached_ = 0.f;
};

}  // namespace mlpcm
