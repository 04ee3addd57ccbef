#include <gtest/gtest.h>

#include <cmath>

#include "fieldloom/errors.hpp"
#include "fieldloom/fields.hpp"
#include "fieldloom/rng.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace fieldloom;

namespace {

std::vector<double> random_points(std::size_t n, int d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n * d);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

ArchSpec small(ArchKind kind, int d = 2) {
    auto s = ArchSpec::defaults(kind, d);
    s.depth = 2;
    s.width = 8;
    s.fourier_features = 4;
    s.rbf_centers = 6;
    return s;
}

}  // namespace

TEST(ParamCount, ReferenceArchitectures) {
    EXPECT_EQ(count_params(ArchSpec::defaults(ArchKind::sine, 2)), 50049u);
    EXPECT_EQ(count_params(ArchSpec::defaults(ArchKind::sine, 3)), 50177u);
    EXPECT_EQ(count_params(ArchSpec::defaults(ArchKind::fourier, 2)), 37377u);
    EXPECT_EQ(count_params(ArchSpec::defaults(ArchKind::relu, 2)), 50049u);
    EXPECT_EQ(count_params(ArchSpec::defaults(ArchKind::rbf, 2)), 41537u);
}

TEST(ParamCount, MatchesInitialisedVector) {
    for (auto k : {ArchKind::sine, ArchKind::fourier, ArchKind::relu, ArchKind::rbf}) {
        const auto spec = small(k, 3);
        EXPECT_EQ(init_params(spec, 1).params.size(), count_params(spec));
    }
}

TEST(Macs, AnalyticCounts) {
    EXPECT_EQ(estimate_macs(ArchSpec::defaults(ArchKind::sine, 2)), 49536u);
    EXPECT_EQ(estimate_macs(ArchSpec::defaults(ArchKind::fourier, 2)), 37024u);
    EXPECT_LT(estimate_macs(ArchSpec::defaults(ArchKind::fourier, 2)), estimate_macs(ArchSpec::defaults(ArchKind::sine, 2)));
    ArchSpec one{ArchKind::sine, 2, 1, 1};
    EXPECT_EQ(estimate_macs(one), 3u);
}

TEST(ArchSpec, ValidationAndNames) {
    ArchSpec bad = ArchSpec::defaults(ArchKind::sine, 2);
    bad.width = 0;
    EXPECT_THROW(bad.validate(), UsageError);
    bad = ArchSpec::defaults(ArchKind::sine, 4);
    EXPECT_THROW(bad.validate(), UsageError);
    EXPECT_EQ(arch_from_string("siren"), ArchKind::sine);
    EXPECT_THROW(arch_from_string("transformer"), UsageError);
}

TEST(Init, DeterministicAndWithinBounds) {
    const auto spec = ArchSpec::defaults(ArchKind::sine, 2);
    const auto a = init_params(spec, 5);
    EXPECT_EQ(a, init_params(spec, 5));
    EXPECT_NE(a.params, init_params(spec, 6).params);
    // first layer: 2 x 128 weights bounded by 1/d
    for (int i = 0; i < 256; ++i) EXPECT_LE(std::abs(a.params[i]), 0.5);
    // second layer weights: sqrt(6/128)/30
    const double bound = std::sqrt(6.0 / 128.0) / 30.0;
    for (int i = 384; i < 384 + 128 * 128; ++i) EXPECT_LE(std::abs(a.params[i]), bound);
}

TEST(Forward, ZeroParametersGiveZeroLogit) {
    auto m = init_params(small(ArchKind::relu), 0);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    const double x[2] = {0.3, -0.2};
    EXPECT_EQ(forward(m, x), 0.0);
}

TEST(Forward, MatchesNaiveOracle) {
    for (auto k : {ArchKind::sine, ArchKind::fourier, ArchKind::relu, ArchKind::rbf}) {
        const auto m = init_params(ArchSpec::defaults(k, 3), 17);
        const auto X = random_points(20, 3, 2);
        for (std::size_t i = 0; i < 20; ++i) {
            const std::span<const double> x(X.data() + i * 3, 3);
            EXPECT_NEAR(forward(m, x), oracle::forward(m, x), 1e-12) << to_string(k);
        }
    }
}

TEST(Forward, BatchIsBitwiseEqualToSingleAndChunkIndependent) {
    for (auto k : {ArchKind::sine, ArchKind::fourier, ArchKind::relu, ArchKind::rbf}) {
        const auto m = init_params(ArchSpec::defaults(k, 2), 3);
        const auto X = random_points(257, 2, 4);
        const auto all = forward_batch(m, X);
        for (std::size_t i = 0; i < 257; ++i) EXPECT_EQ(all[i], forward(m, std::span<const double>(X.data() + 2 * i, 2)));
        const auto head = forward_batch(m, std::span<const double>(X.data(), 2 * 100));
        const auto tail = forward_batch(m, std::span<const double>(X.data() + 200, X.size() - 200));
        for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(head[i], all[i]);
        for (std::size_t i = 0; i < tail.size(); ++i) EXPECT_EQ(tail[i], all[100 + i]);
    }
}

TEST(Forward, DimensionMismatchAndNonFinite) {
    auto m = init_params(small(ArchKind::relu), 0);
    const double x3[3] = {0, 0, 0};
    EXPECT_THROW(forward(m, x3), UsageError);
    m.params.back() = NAN;
    const double x2[2] = {0, 0};
    EXPECT_THROW(forward(m, x2), NumericError);
}

TEST(Backward, MatchesCentralDifferences) {
    for (auto k : {ArchKind::sine, ArchKind::fourier, ArchKind::relu, ArchKind::rbf}) {
        auto spec = small(k);
        spec.w0 = 3.0;
        auto m = init_params(spec, 8);
        const auto X = random_points(5, 2, 9);
        const std::vector<double> up{0.3, -1.0, 0.7, 0.2, -0.4};
        const auto g = backward(m, X, up);
        ASSERT_EQ(g.size(), m.params.size());
        const double h = 1e-6;
        for (std::size_t j = 0; j < m.params.size(); ++j) {
            auto f = [&](double delta) {
                auto mm = m;
                mm.params[j] += delta;
                const auto z = forward_batch(mm, X);
                double s = 0.0;
                for (std::size_t i = 0; i < z.size(); ++i) s += up[i] * z[i];
                return s;
            };
            const double fd = (f(h) - f(-h)) / (2 * h);
            EXPECT_NEAR(g[j], fd, 1e-6 + 1e-4 * std::abs(fd)) << to_string(k) << " param " << j;
        }
    }
}

TEST(Backward, TapeAndRecomputeAgree) {
    const auto m = init_params(small(ArchKind::sine), 2);
    const auto X = random_points(7, 2, 1);
    const std::vector<double> up(7, 1.0);
    ForwardTape tape;
    forward_batch(m, X, &tape);
    EXPECT_EQ(backward(m, tape, up), backward(m, X, up));
}

TEST(Checkpoint, RoundTripIsExact) {
    TempDir tmp;
    for (auto k : {ArchKind::sine, ArchKind::fourier, ArchKind::relu, ArchKind::rbf}) {
        const auto m = init_params(small(k, 3), 12);
        save_checkpoint(m, tmp / "m.ckpt");
        const auto back = load_checkpoint(tmp / "m.ckpt");
        EXPECT_EQ(checkpoint_header(back), checkpoint_header(m)) << to_string(k);
        EXPECT_EQ(back.params, m.params) << to_string(k);
        EXPECT_EQ(back.frozen, m.frozen) << to_string(k);
    }
    EXPECT_NE(checkpoint_header(init_params(small(ArchKind::sine), 0)).find("arch=sine"), std::string::npos);
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
    TempDir tmp;
    EXPECT_THROW(load_checkpoint(tmp / "missing.ckpt"), DataError);
    const auto m = init_params(small(ArchKind::relu), 1);
    save_checkpoint(m, tmp / "m.ckpt");
    auto text = slurp(tmp / "m.ckpt");
    text.resize(text.size() / 2);
    tmp.write("cut.ckpt", text);
    EXPECT_THROW(load_checkpoint(tmp / "cut.ckpt"), DataError);
}
