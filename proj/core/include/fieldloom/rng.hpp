#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace fieldloom {

/// Independent random streams derived from one user seed.
enum class Stream : std::uint64_t {
    init = 1,
    frozen = 2,
    background = 3,
    shuffle = 4,
    split = 5,
    bootstrap = 6,
    pixels = 7,
    bench = 8,
};

/// xoshiro256** seeded through SplitMix64.
///
/// Every distribution here is implemented locally (no <random> distributions),
/// so a (seed, stream) pair yields the same sequence on every platform:
///   uniform01()  = (next() >> 11) * 2^-53
///   below(n)     = rejection-sampled next() % n
///   normal()     = Box-Muller on two uniform01 draws, cosine branch only
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    Rng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0)
        : Rng(mix(seed, static_cast<std::uint64_t>(stream), substream)) {}

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x = next();
        while (x >= limit) x = next();
        return x % n;
    }

    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub) {
        std::uint64_t x = seed;
        std::uint64_t h = splitmix64(x);
        x = h ^ (stream * 0xd1b54a32d192ed03ULL);
        h = splitmix64(x);
        x = h ^ (sub * 0x8cb92ba72f3d8dd7ULL);
        return splitmix64(x);
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace fieldloom
