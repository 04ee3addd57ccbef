#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "fieldloom/fields.hpp"
#include "fieldloom/raster.hpp"

namespace oracle {

// Straight-line forward pass written from the documented parameter layout.
inline double forward(const fieldloom::FieldModel& m, std::span<const double> x) {
    using fieldloom::ArchKind;
    const auto& s = m.spec;
    const int d = s.input_dim;
    std::size_t off = 0;
    std::vector<double> h;
    if (s.kind == ArchKind::fourier) {
        const int K = s.fourier_features;
        h.assign(2 * K, 0.0);
        for (int j = 0; j < K; ++j) {
            double proj = 0.0;
            for (int k = 0; k < d; ++k) proj += m.frozen[j * d + k] * x[k];
            h[j] = std::sin(2.0 * std::numbers::pi * proj);
            h[K + j] = std::cos(2.0 * std::numbers::pi * proj);
        }
    } else if (s.kind == ArchKind::rbf) {
        const int C = s.rbf_centers;
        h.assign(C, 0.0);
        for (int j = 0; j < C; ++j) {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) r2 += (x[k] - m.frozen[j * d + k]) * (x[k] - m.frozen[j * d + k]);
            const double w = std::exp(m.params[j]);
            h[j] = std::exp(-r2 / (2.0 * w * w));
        }
        off = C;
    } else {
        h.assign(x.begin(), x.end());
    }
    for (int l = 0; l <= s.depth; ++l) {
        const int in = static_cast<int>(h.size());
        const int out = l == s.depth ? 1 : s.width;
        std::vector<double> z(out, 0.0);
        for (int o = 0; o < out; ++o) {
            double acc = m.params[off + static_cast<std::size_t>(in) * out + o];
            for (int k = 0; k < in; ++k) acc += m.params[off + static_cast<std::size_t>(k) * out + o] * h[k];
            z[o] = acc;
        }
        off += static_cast<std::size_t>(in) * out + out;
        if (l < s.depth)
            for (auto& v : z) v = s.kind == ArchKind::sine ? std::sin(s.w0 * v) : std::max(v, 0.0);
        h = std::move(z);
    }
    return h[0];
}

// Exhaustive pair count: twice the wins, divided once.
inline double roc_auc(std::span<const double> s, std::span<const std::uint8_t> y) {
    std::uint64_t twice = 0, P = 0, N = 0;
    for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? P : N)++;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
        }
    }
    return static_cast<double>(twice) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
}

// Precision at each positive's own score (everything scoring at least as
// high is predicted positive), summed over positives from the top down.
inline double pr_auc(std::span<const double> s, std::span<const std::uint8_t> y) {
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (y[i]) pos.push_back(i);
    std::stable_sort(pos.begin(), pos.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    double ap = 0.0;
    for (auto i : pos) {
        std::size_t tp = 0, all = 0;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s[j] >= s[i]) {
                ++all;
                tp += y[j];
            }
        ap += static_cast<double>(tp) / static_cast<double>(all);
    }
    return ap / static_cast<double>(pos.size());
}

inline double dice(const fieldloom::BinaryRaster& a, const fieldloom::BinaryRaster& b) {
    double inter = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.bits().size(); ++i) {
        inter += a.bits()[i] && b.bits()[i];
        sa += a.bits()[i];
        sb += b.bits()[i];
    }
    return sa + sb == 0 ? 1.0 : 2 * inter / (sa + sb);
}

}  // namespace oracle
