#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fieldloom/errors.hpp"
#include "fieldloom/metrics.hpp"
#include "fieldloom/recon.hpp"
#include "fieldloom/rng.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace fieldloom;

namespace {

struct Sample {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    ScoredSet view() const { return {scores, labels}; }
};

Sample random_sample(std::size_t n, std::uint64_t seed, int levels = 0) {
    Rng rng(seed);
    Sample s;
    for (std::size_t i = 0; i < n; ++i) {
        s.scores.push_back(levels ? static_cast<double>(rng.below(levels)) / levels : rng.uniform01());
        s.labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
    s.labels[0] = 1;
    s.labels[1] = 0;
    return s;
}

BinaryRaster square(int w, int h, int x0, int y0, int side) {
    BinaryRaster m(w, h, 0);
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.set(x, y, true);
    return m;
}

BinaryRaster random_mask(int w, int h, Rng& rng) {
    BinaryRaster m(w, h, 0);
    const int blobs = 1 + static_cast<int>(rng.below(3));
    for (int b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0, w), cy = rng.uniform(0, h), r = rng.uniform(2, w / 3.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (std::hypot(x - cx, y - cy) <= r) m.set(x, y, true);
    }
    return m;
}

}  // namespace

TEST(RocAuc, SimpleCases) {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    const std::vector<std::uint8_t> y{0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(roc_auc({s, y}), 0.75);
    const std::vector<double> tied(4, 0.5);
    EXPECT_DOUBLE_EQ(roc_auc({tied, y}), 0.5);
    const std::vector<std::uint8_t> ones(4, 1);
    EXPECT_THROW(roc_auc({s, ones}), DataError);
}

TEST(RocAuc, EqualsPairCountingOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto smp = random_sample(2 + seed % 150, seed, seed % 2 ? 5 : 0);
        EXPECT_EQ(roc_auc(smp.view()), oracle::roc_auc(smp.scores, smp.labels)) << seed;
    }
}

TEST(RocAuc, InvariantUnderMonotoneTransform) {
    auto smp = random_sample(120, 4, 9);
    const double before = roc_auc(smp.view());
    for (auto& v : smp.scores) v = std::exp(3.0 * v) - 7.0;
    EXPECT_EQ(roc_auc(smp.view()), before);
}

TEST(PrAuc, SimpleCasesAndOracle) {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
    const std::vector<std::uint8_t> y{1, 0, 1, 0};
    EXPECT_DOUBLE_EQ(pr_auc({s, y}), (1.0 + 2.0 / 3.0) / 2.0);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto smp = random_sample(2 + seed % 150, seed + 1000, seed % 2 ? 4 : 0);
        EXPECT_EQ(pr_auc(smp.view()), oracle::pr_auc(smp.scores, smp.labels)) << seed;
    }
}

TEST(Pointwise, HandComputed) {
    const std::vector<double> s{0.9, 0.2, 0.6, 0.4};
    const std::vector<std::uint8_t> y{1, 0, 0, 1};
    const auto m = pointwise_metrics({s, y});
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
    EXPECT_DOUBLE_EQ(m.precision, 0.5);
    EXPECT_DOUBLE_EQ(m.recall, 0.5);
    EXPECT_DOUBLE_EQ(m.brier, (0.01 + 0.04 + 0.36 + 0.36) / 4);
    EXPECT_NEAR(m.logloss, -(std::log(0.9) + std::log(0.8) + std::log(0.4) + std::log(0.4)) / 4, 1e-15);
    const std::vector<double> hard{0.0, 1.0};
    const std::vector<std::uint8_t> wrong{1, 0};
    EXPECT_NEAR(pointwise_metrics({hard, wrong}).logloss, -std::log(1e-12), 1e-3);
}

TEST(Ece, ZeroWhenBinsAreCalibrated) {
    const std::vector<double> s{0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75};
    const std::vector<std::uint8_t> y{1, 0, 0, 0, 1, 1, 1, 0};
    EXPECT_NEAR(ece({s, y}), 0.0, 1e-15);
    const std::vector<double> off{0.95, 0.95};
    const std::vector<std::uint8_t> zeros{0, 0};
    EXPECT_NEAR(ece({off, zeros}), 0.95, 1e-15);
    const std::vector<double> one{1.0};
    const std::vector<std::uint8_t> pos{1};
    EXPECT_EQ(ece({one, pos}), 0.0);
}

TEST(Bootstrap, DeterministicAndContainsEstimate) {
    const auto smp = random_sample(200, 3);
    BootstrapOptions o{300, 5, 10000};
    const auto a = bootstrap_ci(smp.view(), Metric::roc_auc, o);
    const auto b = bootstrap_ci(smp.view(), Metric::roc_auc, o);
    EXPECT_EQ(a.lo, b.lo);
    EXPECT_EQ(a.hi, b.hi);
    EXPECT_LE(a.lo, a.hi);
    EXPECT_GT(a.hi - a.lo, 0.0);
}

TEST(Bootstrap, WidensOnNestedSubsamples) {
    Rng rng(8);
    Sample full;
    for (int i = 0; i < 1600; ++i) {
        const std::uint8_t y = static_cast<std::uint8_t>(rng.below(2));
        full.labels.push_back(y);
        full.scores.push_back(std::clamp(rng.normal(y ? 0.6 : 0.4, 0.2), 0.0, 1.0));
    }
    double prev = 0.0;
    for (std::size_t n : {1600u, 400u, 100u}) {
        const ScoredSet sub{std::span<const double>(full.scores).first(n), std::span<const std::uint8_t>(full.labels).first(n)};
        const auto ci = bootstrap_ci(sub, Metric::roc_auc, {500, 1, 10000});
        EXPECT_GE(ci.hi - ci.lo, prev) << n;
        prev = ci.hi - ci.lo;
    }
}

TEST(Report, FileRoundTripAndSuite) {
    TempDir tmp;
    const auto smp = random_sample(80, 2);
    ReportOptions ro;
    ro.bootstrap = BootstrapOptions{50, 1, 10000};
    const auto r = classification_report(smp.view(), ro);
    for (const char* k : {"roc_auc", "pr_auc", "logloss", "brier", "acc_at_05", "f1_at_05", "ece"}) EXPECT_NE(r.find(k), nullptr) << k;
    EXPECT_TRUE(r.find("roc_auc")->ci.has_value());
    EXPECT_FALSE(r.find("brier")->ci.has_value());
    EXPECT_EQ(r.meta("ece_bins"), "10");
    write_report(r, tmp / "r.csv");
    const auto back = read_report(tmp / "r.csv");
    EXPECT_EQ(back.metadata, r.metadata);
    ASSERT_EQ(back.entries.size(), r.entries.size());
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        EXPECT_EQ(back.entries[i].value, r.entries[i].value);
        EXPECT_EQ(back.entries[i].ci.has_value(), r.entries[i].ci.has_value());
    }
}

TEST(LeakageGap, SubtractsRandomMinusBlocked) {
    MetricReport random, blocked;
    random.set("roc_auc", 0.991);
    blocked.set("roc_auc", 0.975);
    random.set("logloss", 0.2);
    blocked.set("logloss", 0.3);
    const auto g = leakage_gap(random, blocked);
    EXPECT_NEAR(g.value("roc_auc"), 0.016, 1e-12);
    EXPECT_NEAR(g.value("logloss"), -0.1, 1e-12);
    EXPECT_EQ(g.meta("protocol"), "random-blocked");
    EXPECT_EQ(leakage_gap(random, random).value("roc_auc"), 0.0);
    blocked.set("ece", 0.1);
    EXPECT_THROW(leakage_gap(random, blocked), DataError);
}

TEST(Overlap, DiceAndIou) {
    const auto a = square(10, 10, 0, 0, 4), b = square(10, 10, 2, 0, 4);
    const auto m = dice_iou(a, b);
    EXPECT_DOUBLE_EQ(m.dice, 0.5);
    EXPECT_DOUBLE_EQ(m.iou, 1.0 / 3.0);
    EXPECT_EQ(dice_iou(BinaryRaster(3, 3, 0), BinaryRaster(3, 3, 0)).dice, 1.0);
    EXPECT_THROW(dice_iou(BinaryRaster(3, 3, 0), BinaryRaster(4, 3, 0)), UsageError);
}

TEST(Overlap, DiceAtLeastIouEqualOnlyAtExtremes) {
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_mask(24, 24, rng), b = random_mask(24, 24, rng);
        const auto m = dice_iou(a, b);
        EXPECT_GE(m.dice, m.iou);
        if (m.dice == m.iou) EXPECT_TRUE(m.dice == 0.0 || m.dice == 1.0);
        EXPECT_DOUBLE_EQ(m.dice, oracle::dice(a, b));
    }
}

TEST(Boundary, FourNeighbourAndBorder) {
    const auto b = boundary_of(square(5, 5, 0, 0, 5));
    EXPECT_EQ(b.count_ones(), 16u);
    EXPECT_EQ(b.at(2, 2), 0);
    EXPECT_EQ(boundary_of(square(6, 6, 1, 1, 3)).count_ones(), 8u);
}

TEST(BoundaryF1, IdenticalShiftedAndEmpty) {
    const auto a = square(10, 10, 2, 2, 4);
    for (int t : {0, 1, 3}) EXPECT_EQ(boundary_f1(a, a, t), 1.0);
    const auto shifted = square(10, 10, 4, 2, 4);
    EXPECT_LT(boundary_f1(a, shifted, 1), boundary_f1(a, shifted, 2));
    EXPECT_EQ(boundary_f1(a, shifted, 2), 1.0);
    EXPECT_EQ(boundary_f1(BinaryRaster(4, 4, 0), BinaryRaster(4, 4, 0), 1), 1.0);
    EXPECT_EQ(boundary_f1(a, BinaryRaster(10, 10, 0), 1), 0.0);
}

TEST(BoundaryF1, NonDecreasingInTolerance) {
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_mask(32, 32, rng), b = random_mask(32, 32, rng);
        double prev = -1.0;
        for (int t = 0; t <= 8; ++t) {
            const double f = boundary_f1(a, b, t);
            EXPECT_GE(f, prev);
            prev = f;
        }
    }
}

TEST(Thresholds, BestDiceAndMedian) {
    ProbabilityImage p{4, 1, {0.2, 0.45, 0.55, 0.9}};
    const BinaryRaster gt(4, 1, std::vector<std::uint8_t>{0, 1, 1, 1});
    const double t = best_dice_threshold(p, gt);
    EXPECT_DOUBLE_EQ(t, 0.21);
    EXPECT_GE(dice_iou(p.threshold(t), gt).dice, dice_iou(p.threshold(0.5), gt).dice);
    EXPECT_DOUBLE_EQ(median({0.4, 0.59, 0.7}), 0.59);
    EXPECT_DOUBLE_EQ(median({0.4, 0.6}), 0.5);
    std::vector<ProbabilityImage> probs{p};
    std::vector<BinaryRaster> gts{gt};
    EXPECT_EQ(select_thresholds(probs, gts).global, t);
    gts[0] = BinaryRaster(4, 1, 1);
    EXPECT_THROW(select_thresholds(probs, gts), DataError);
}

TEST(FieldSummary, AreaEooAndHits) {
    ProbabilityField f;
    f.grid.axes = {GridAxis{0.0, 10.0, 10, {}}, GridAxis{0.0, 10.0, 10, {}}};
    f.values.assign(100, 1.0);
    PointSet pres(2, true);
    const double corners[4][2] = {{2.0, 2.0}, {3.0, 2.0}, {3.0, 3.0}, {2.0, 3.0}};
    for (const auto& c : corners) pres.push_back(c, 1, Source::presence);
    auto s = field_summary(f, pres);
    EXPECT_DOUBLE_EQ(s.area_above_threshold, 100.0);
    EXPECT_DOUBLE_EQ(s.eoo, 1.0);

    f.values.assign(100, 0.1);
    f.values[7 * 10 + 4] = 0.9;  // cell x 4, y 7
    PointSet one(2, true);
    const double p[2] = {4.5, 7.2};
    one.push_back(p, 1, Source::presence);
    s = field_summary(f, one);
    EXPECT_EQ(s.hit_at_1pct, 1.0);
    EXPECT_EQ(s.area_above_threshold, 1.0);

    PointSet outside(2, true);
    const double q[2] = {40.0, 7.2};
    outside.push_back(q, 1, Source::presence);
    s = field_summary(f, outside);
    EXPECT_EQ(s.outside_field, 1u);
    EXPECT_EQ(s.hit_at_5pct, 0.0);
}
