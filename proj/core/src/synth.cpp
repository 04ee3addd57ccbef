#include "fieldloom/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fieldloom/errors.hpp"
#include "fieldloom/rng.hpp"

namespace fieldloom {

PointSet synth_two_bump(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw UsageError("two-bump generator needs n >= 2");
    struct Bump {
        double x, y, sd, weight;
    };
    constexpr std::array<Bump, 2> bumps{{{3.0, 3.0, 0.4, 0.5}, {7.0, 6.5, 0.5, 0.5}}};
    Rng rng(seed, Stream::background, 1);
    PointSet out(2, false);
    const std::size_t n_pres = n / 2;
    while (out.size() < n_pres) {
        const auto& b = rng.uniform01() < bumps[0].weight ? bumps[0] : bumps[1];
        const double p[2] = {rng.normal(b.x, b.sd), rng.normal(b.y, b.sd)};
        if (p[0] < 0.0 || p[0] > 10.0 || p[1] < 0.0 || p[1] > 10.0) continue;
        out.push_back(p, 1, Source::presence);
    }
    while (out.size() < n) {
        const double p[2] = {rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
        out.push_back(p, 0, Source::background);
    }
    return out;
}

PointSet synth_clusters(const ClusterOptions& o, std::uint64_t seed) {
    if (o.clusters < 1 || o.per_cluster < 1) throw UsageError("cluster generator needs clusters and points");
    if (!(o.lon.low < o.lon.high && o.lat.low < o.lat.high)) throw UsageError("cluster box needs low < high");
    Rng rng(seed, Stream::background, 2);
    PointSet out(2, true);
    const double margin = 2.0 * o.spread_deg;
    for (int c = 0; c < o.clusters; ++c) {
        const double cx = rng.uniform(o.lon.low + margin, o.lon.high - margin);
        const double cy = rng.uniform(o.lat.low + margin, o.lat.high - margin);
        for (std::size_t i = 0; i < o.per_cluster;) {
            const double p[2] = {rng.normal(cx, o.spread_deg), rng.normal(cy, o.spread_deg)};
            if (p[0] < o.lon.low || p[0] > o.lon.high || p[1] < o.lat.low || p[1] > o.lat.high) continue;
            out.push_back(p, 1, Source::presence);
            ++i;
        }
    }
    for (std::size_t j = 0; j < o.background; ++j) {
        const double p[2] = {rng.uniform(o.lon.low, o.lon.high), rng.uniform(o.lat.low, o.lat.high)};
        out.push_back(p, 0, Source::background);
    }
    return out;
}

BinaryRaster synth_leaf_mask(int width, int height, std::uint64_t seed) {
    if (width < 8 || height < 8) throw UsageError("leaf mask needs at least 8x8 pixels");
    Rng rng(seed, Stream::pixels, 7);
    const double cx = width * rng.uniform(0.45, 0.55), cy = height * rng.uniform(0.45, 0.55);
    const double radius = 0.32 * std::min(width, height);
    const double aspect = rng.uniform(0.55, 0.8);
    const double tilt = rng.uniform(0.0, std::numbers::pi);
    const double a3 = rng.uniform(0.05, 0.15), a5 = rng.uniform(0.02, 0.08);
    const double p3 = rng.uniform(0.0, 2 * std::numbers::pi), p5 = rng.uniform(0.0, 2 * std::numbers::pi);

    BinaryRaster mask(width, height, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double u = dx * std::cos(tilt) + dy * std::sin(tilt);
            const double v = (-dx * std::sin(tilt) + dy * std::cos(tilt)) / aspect;
            const double theta = std::atan2(v, u);
            const double r = radius * (1.0 + a3 * std::sin(3 * theta + p3) + a5 * std::sin(5 * theta + p5));
            if (std::hypot(u, v) <= r) mask.set(x, y, 1);
        }
    return mask;
}

}  // namespace fieldloom
