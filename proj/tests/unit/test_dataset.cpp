#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fieldloom/dataset.hpp"
#include "fieldloom/errors.hpp"
#include "fieldloom/rng.hpp"
#include "tmpdir.hpp"

using namespace fieldloom;

namespace {

PointSet make_set(std::initializer_list<std::array<double, 2>> pts, std::uint8_t label = 1) {
    PointSet s(2, true);
    for (const auto& p : pts) s.push_back(p, label, label ? Source::presence : Source::background);
    return s;
}

PointSet random_geo(std::size_t n, std::uint64_t seed, double lon_span = 40.0, double lat_span = 30.0) {
    Rng rng(seed);
    PointSet s(2, true);
    for (std::size_t i = 0; i < n; ++i) {
        const double p[2] = {rng.uniform(-lon_span, lon_span), rng.uniform(-lat_span, lat_span)};
        s.push_back(p, static_cast<std::uint8_t>(rng.below(2)), Source::presence);
    }
    return s;
}

}  // namespace

TEST(LoadPoints, ReadsDefaultColumnsAndKeepsBadRowsFlagged) {
    TempDir tmp;
    const auto p = tmp.write("pts.csv", "id,lon,lat,label\n1,10.5,20,1\n2,abc,5,0\n3,-3,4,0\n");
    const auto r = load_points(p);
    ASSERT_EQ(r.points.size(), 3u);
    EXPECT_EQ(r.bad_rows, 1u);
    EXPECT_EQ(r.points.valid[1], 0);
    EXPECT_DOUBLE_EQ(r.points.point(0)[0], 10.5);
    EXPECT_EQ(r.points.labels[2], 0);
    EXPECT_EQ(clean(r.points).size(), 2u);
}

TEST(LoadPoints, MissingFileAndColumnAreDataErrors) {
    TempDir tmp;
    EXPECT_THROW(load_points(tmp / "absent.csv"), DataError);
    const auto p = tmp.write("pts.csv", "x,y\n1,2\n");
    EXPECT_THROW(load_points(p), DataError);
}

TEST(LoadPoints, EmptyLabelColumnMeansPresenceOnly) {
    TempDir tmp;
    const auto p = tmp.write("pts.csv", "lon,lat,doy\n1,2,100\n3,4,200\n");
    const auto r = load_points(p, Schema::parse("lon,lat,doy", ""));
    EXPECT_EQ(r.points.dim, 3);
    EXPECT_EQ(r.points.count_positive(), 2u);
}

TEST(WritePoints, RoundTripsExactly) {
    TempDir tmp;
    auto s = random_geo(50, 3);
    write_points(s, tmp / "out.csv", {"lon", "lat"});
    const auto back = load_points(tmp / "out.csv").points;
    EXPECT_EQ(back.coords, s.coords);
    EXPECT_EQ(back.labels, s.labels);
    EXPECT_EQ(back.sources, s.sources);
}

TEST(Clean, DropsInvalidOutOfRangeAndDuplicatesFirstWins) {
    PointSet s(2, true);
    const double a[2] = {1, 1}, b[2] = {200, 1}, c[2] = {1, 1}, d[2] = {NAN, 0}, e[2] = {5, -91};
    s.push_back(a, 1, Source::presence);
    s.push_back(b, 1, Source::presence);
    s.push_back(c, 0, Source::background);
    s.push_back(d, 1, Source::presence);
    s.push_back(e, 1, Source::presence);
    const auto out = clean(s);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.labels[0], 1);
}

TEST(Clean, IsIdempotent) {
    auto s = random_geo(300, 9);
    s = concat(s, s.subset(std::vector<std::size_t>{0, 5, 7}));
    const auto once = clean(s);
    EXPECT_EQ(once.size(), 300u);
    EXPECT_EQ(clean(once), once);
}

TEST(Clean, EmptyResultThrows) {
    PointSet s(2, true);
    const double bad[2] = {500, 0};
    s.push_back(bad, 1, Source::presence);
    EXPECT_THROW(clean(s), DataError);
}

TEST(SampleBackground, ReproducibleAndInsideBox) {
    const auto pres = make_set({{0, 0}, {10, 5}, {3, 2}});
    const auto a = sample_background(pres, 500, 42);
    const auto b = sample_background(pres, 500, 42);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, sample_background(pres, 500, 43));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.labels[i], 0);
        EXPECT_EQ(a.sources[i], Source::background);
        EXPECT_GE(a.point(i)[0], 0.0);
        EXPECT_LE(a.point(i)[0], 10.0);
        EXPECT_GE(a.point(i)[1], 0.0);
        EXPECT_LE(a.point(i)[1], 5.0);
    }
}

TEST(SampleBackground, KolmogorovSmirnovAgainstUniform) {
    const auto pres = make_set({{-20, -10}, {30, 40}});
    const auto bg = sample_background(pres, 10000, 7);
    const double lo[2] = {-20, -10}, hi[2] = {30, 40};
    for (int k = 0; k < 2; ++k) {
        std::vector<double> v;
        for (std::size_t i = 0; i < bg.size(); ++i) v.push_back((bg.point(i)[k] - lo[k]) / (hi[k] - lo[k]));
        std::sort(v.begin(), v.end());
        double ks = 0.0;
        const double n = static_cast<double>(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            ks = std::max({ks, std::abs((i + 1) / n - v[i]), std::abs(v[i] - i / n)});
        EXPECT_LT(ks, 0.05) << "dimension " << k;
    }
}

TEST(SampleBackground, DegenerateBoxThrows) {
    const auto pres = make_set({{1, 1}, {1, 5}});
    EXPECT_THROW(sample_background(pres, 10, 0), DataError);
}

TEST(SampleBackground, DayOfYearSpansWholeYear) {
    PointSet pres(3, true);
    const double a[3] = {0, 0, 150}, b[3] = {10, 10, 160};
    pres.push_back(a, 1, Source::presence);
    pres.push_back(b, 1, Source::presence);
    const auto bg = sample_background(pres, 2000, 1);
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < bg.size(); ++i) {
        lo = std::min(lo, bg.point(i)[2]);
        hi = std::max(hi, bg.point(i)[2]);
    }
    EXPECT_GE(lo, 1.0);
    EXPECT_LE(hi, 366.0);
    EXPECT_LT(lo, 20.0);
    EXPECT_GT(hi, 340.0);
}

TEST(Normalizer, MapsTrainingRangeOntoUnitInterval) {
    const auto s = make_set({{-10, 0}, {30, 50}, {10, 25}});
    const auto n = fit_normalizer(s);
    EXPECT_DOUBLE_EQ(n.apply(0, -10), -1.0);
    EXPECT_DOUBLE_EQ(n.apply(0, 30), 1.0);
    EXPECT_DOUBLE_EQ(n.apply(1, 25), 0.0);
    const auto t = apply_normalizer(n, s);
    EXPECT_FALSE(t.geographic);
}

TEST(Normalizer, RoundTripWithinRelativeTolerance) {
    const auto s = random_geo(100, 5, 170, 80);
    const auto n = fit_normalizer(s);
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const int k = static_cast<int>(rng.below(2));
        const double x = rng.uniform(-1e4, 1e4);
        EXPECT_LE(std::abs(n.invert(k, n.apply(k, x)) - x), 1e-12 * std::max(1.0, std::abs(x)));
    }
}

TEST(Normalizer, ConstantDimensionMapsToZeroWithWarning) {
    const auto s = make_set({{1, 7}, {2, 7}, {3, 7}});
    const auto n = fit_normalizer(s);
    EXPECT_EQ(n.degenerate[1], 1);
    EXPECT_FALSE(n.warnings.empty());
    EXPECT_EQ(n.apply(1, 123.0), 0.0);
}

TEST(Normalizer, FileRoundTrip) {
    TempDir tmp;
    const auto n = fit_normalizer(random_geo(40, 2));
    write_normalizer(n, tmp / "n.norm");
    const auto back = read_normalizer(tmp / "n.norm");
    ASSERT_EQ(back.dim(), 2);
    for (int k = 0; k < 2; ++k) {
        EXPECT_EQ(back.bounds[k].low, n.bounds[k].low);
        EXPECT_EQ(back.bounds[k].high, n.bounds[k].high);
    }
}

TEST(SplitRandom, HundredRecordsGiveTwentyTenSeventy) {
    const auto s = split_random(100, 0.2, 0.1, 1);
    EXPECT_EQ(s.count(Partition::test), 20u);
    EXPECT_EQ(s.count(Partition::val), 10u);
    EXPECT_EQ(s.count(Partition::train), 70u);
}

TEST(SplitRandom, SizesWithinOneOfTargetAndDeterministic) {
    for (std::size_t n : {7u, 33u, 101u, 999u}) {
        const auto s = split_random(n, 0.2, 0.1, n);
        EXPECT_LE(std::abs(static_cast<double>(s.count(Partition::test)) - 0.2 * n), 1.0);
        EXPECT_LE(std::abs(static_cast<double>(s.count(Partition::val)) - 0.1 * n), 1.0);
        EXPECT_EQ(s.tags, split_random(n, 0.2, 0.1, n).tags);
    }
}

TEST(SplitRandom, RejectsBadFractions) {
    EXPECT_THROW(split_random(100, 0.0, 0.1, 0), UsageError);
    EXPECT_THROW(split_random(100, 0.6, 0.5, 0), UsageError);
}

TEST(SplitBlocked, SameBlockAlwaysSamePartition) {
    const auto s = random_geo(3000, 21, 100, 60);
    const auto split = split_blocked(s, {}, 4);
    std::map<std::string, Partition> seen;
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto [it, fresh] = seen.emplace(split.block_ids[i], split.tags[i]);
        EXPECT_EQ(it->second, split.tags[i]);
    }
    const double a[2] = {1.0, 0.5}, b[2] = {2.0, 0.5};
    EXPECT_EQ(block_id(a, 5.0, std::nullopt), block_id(b, 5.0, std::nullopt));
    const double c[2] = {7.0, 0.5};
    EXPECT_NE(block_id(a, 5.0, std::nullopt), block_id(c, 5.0, std::nullopt));
}

TEST(SplitBlocked, HundredBlocksGiveTwentyTestBlocks) {
    PointSet s(2, true);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            const double p[2] = {i * 5.0 + 2.5, j * 5.0 + 2.5};
            s.push_back(p, (i + j) % 2, Source::presence);
        }
    const auto split = split_blocked(s, {5.0, std::nullopt, 0.2, 0.1}, 3);
    EXPECT_EQ(split.count(Partition::test), 20u);
    EXPECT_EQ(split.count(Partition::val), 10u);
}

TEST(SplitBlocked, TooFewBlocksIsDataError) {
    const auto s = make_set({{1, 1}, {2, 2}, {8, 1}});
    EXPECT_THROW(split_blocked(s, {}, 0), DataError);
}

TEST(SplitBlocked, DayOfYearBinsAndLeapDayJoinsLastBin) {
    const double a[3] = {1, 1, 365}, b[3] = {1, 1, 366}, c[3] = {1, 1, 1};
    EXPECT_EQ(block_id(a, 5.0, 30), block_id(b, 5.0, 30));
    EXPECT_NE(block_id(a, 5.0, 30), block_id(c, 5.0, 30));
    EXPECT_EQ(block_id(c, 5.0, 30), "0:0:0");
}

TEST(SplitFile, RoundTrip) {
    TempDir tmp;
    const auto s = random_geo(500, 8, 100, 60);
    const auto split = split_blocked(s, {}, 2);
    write_split(split, tmp / "s.csv");
    const auto back = read_split(tmp / "s.csv");
    EXPECT_EQ(back.tags, split.tags);
    EXPECT_EQ(back.block_ids, split.block_ids);
    EXPECT_EQ(back.protocol, Protocol::blocked);
}

TEST(SamplePixels, ExhaustiveTwoByTwo) {
    const BinaryRaster mask(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
    const auto s = sample_pixels_from_mask(mask, 4, 0);
    ASSERT_EQ(s.size(), 4u);
    std::multiset<int> labels(s.labels.begin(), s.labels.end());
    EXPECT_EQ(labels, (std::multiset<int>{0, 0, 1, 1}));
    for (std::size_t i = 0; i < 4; ++i) {
        const int x = static_cast<int>(s.point(i)[0]), y = static_cast<int>(s.point(i)[1]);
        EXPECT_EQ(s.labels[i], mask.at(x, y));
        EXPECT_DOUBLE_EQ(s.point(i)[0], x + 0.5);
        EXPECT_EQ(s.sources[i], Source::mask_pixel);
    }
}

TEST(SamplePixels, DegenerateMaskAndDeterminism) {
    EXPECT_THROW(sample_pixels_from_mask(BinaryRaster(4, 4, 1), 4, 0), DataError);
    const BinaryRaster mask(5, 5, std::vector<std::uint8_t>(25, 0));
    BinaryRaster m = mask;
    m.set(2, 2, true);
    EXPECT_EQ(sample_pixels_from_mask(m, 10, 3), sample_pixels_from_mask(m, 10, 3));
    EXPECT_EQ(sample_pixels_from_mask(m, 100, 3).size(), 100u);
}
