#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace cdt {

// Seeded random stream with a counted draw sequence. The raw generator is
// std::mt19937_64, whose output sequence is fixed by the standard; the
// uniform/normal transforms below are hand-rolled so the full sequence is
// identical across platforms and standard libraries.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() {
        ++draws_;
        return engine_();
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; uses two uniform draws per value.
    double normal() {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Fisher-Yates over [first, last).
    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = next_below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }
    static const char* algorithm() { return "mt19937_64/boxmuller"; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t draws_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace cdt
