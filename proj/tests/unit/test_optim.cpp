#include <gtest/gtest.h>

#include <cmath>

#include "fieldloom/errors.hpp"
#include "fieldloom/optim.hpp"
#include "fieldloom/rng.hpp"
#include "tmpdir.hpp"

using namespace fieldloom;

namespace {

PointSet xor_like(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PointSet s(2, false);
    for (std::size_t i = 0; i < n; ++i) {
        const double p[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        s.push_back(p, p[0] * p[1] > 0 ? 1 : 0, Source::presence);
    }
    return s;
}

ArchSpec tiny(ArchKind k) {
    auto s = ArchSpec::defaults(k, 2);
    s.depth = 2;
    s.width = 16;
    return s;
}

}  // namespace

TEST(Bce, MatchesNaiveFormulaAndGradient) {
    const std::vector<double> z{-3.0, -0.1, 0.0, 2.5, 40.0};
    const std::vector<std::uint8_t> y{0, 1, 1, 0, 1};
    double naive = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-z[i]));
        naive -= y[i] ? std::log(p) : std::log(1 - p);
    }
    naive /= z.size();
    const auto r = bce_loss_and_upstream(z, y);
    EXPECT_NEAR(r.loss, naive, 1e-12);
    EXPECT_EQ(bce_loss(z, y), r.loss);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = 1e-6;
        auto zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        EXPECT_NEAR(r.upstream[i], (bce_loss(zp, y) - bce_loss(zm, y)) / (2 * h), 1e-7);
    }
}

TEST(Bce, StableForLargeLogits) {
    const std::vector<double> z{-800.0, 800.0};
    const std::vector<std::uint8_t> y{1, 0};
    EXPECT_NEAR(bce_loss(z, y), 800.0, 1e-9);
    EXPECT_EQ(sigmoid(-800.0), 0.0);
    EXPECT_EQ(sigmoid(0.0), 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    TrainConfig cfg;
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.3, -4.0, 0.0};
    AdamState st(3);
    adam_step(p, g, st, cfg);
    EXPECT_EQ(st.t, 1u);
    EXPECT_NEAR(p[0], 1.0 - 1e-3, 1e-10);
    EXPECT_NEAR(p[1], -2.0 + 1e-3, 1e-10);
    EXPECT_EQ(p[2], 0.5);
}

TEST(Adam, MatchesHandComputedSecondStep) {
    TrainConfig cfg;
    std::vector<double> p{0.0};
    AdamState st(1);
    adam_step(p, std::vector<double>{1.0}, st, cfg);
    adam_step(p, std::vector<double>{-2.0}, st, cfg);
    const double m = 0.9 * 0.1 + 0.1 * -2.0, v = 0.999 * 0.001 + 0.001 * 4.0;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double first = -1e-3 * 1.0 / (1.0 + 1e-8);
    EXPECT_NEAR(p[0], first - 1e-3 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
}

TEST(Adam, RejectsNonFiniteGradient) {
    TrainConfig cfg;
    std::vector<double> p{0.0};
    AdamState st(1);
    EXPECT_THROW(adam_step(p, std::vector<double>{NAN}, st, cfg), NumericError);
}

TEST(EarlyStopper, StopsAfterPatienceStaleEpochs) {
    EarlyStopper s(3);
    const double losses[] = {0.5, 0.6, 0.7, 0.8};
    int stopped_after = 0;
    for (int e = 0; e < 4; ++e) {
        s.update(losses[e]);
        if (s.should_stop()) {
            stopped_after = e + 1;
            break;
        }
    }
    EXPECT_EQ(stopped_after, 4);
    EXPECT_EQ(s.best_epoch(), 0);
}

TEST(EarlyStopper, StrictImprovementResetsCounter) {
    EarlyStopper s(2);
    EXPECT_TRUE(s.update(1.0));
    EXPECT_FALSE(s.update(1.0));
    EXPECT_TRUE(s.update(0.9));
    EXPECT_FALSE(s.update(0.95));
    EXPECT_FALSE(s.should_stop());
    EXPECT_FALSE(s.update(0.99));
    EXPECT_TRUE(s.should_stop());
    EXPECT_EQ(s.best_epoch(), 2);
}

TEST(Train, ValidationOverrideDrivesEarlyStopAndBestParams) {
    const auto data = xor_like(400, 1);
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.max_epochs = 10;
    cfg.patience = 3;
    TrainHooks hooks;
    const double forced[] = {0.5, 0.6, 0.7, 0.8, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    hooks.val_loss_override = [&](int e, double) { return forced[e]; };
    const auto r = train(init_params(tiny(ArchKind::relu), 1), data, data, cfg, hooks);
    EXPECT_EQ(r.trace.val_loss.size(), 4u);
    EXPECT_EQ(r.trace.best_epoch, 0);
    EXPECT_EQ(r.trace.stop_reason, StopReason::early_stop);

    // The returned parameters are the ones from the first epoch.
    TrainConfig one = cfg;
    one.max_epochs = 1;
    const auto first = train(init_params(tiny(ArchKind::relu), 1), data, data, one);
    EXPECT_EQ(r.model.params, first.model.params);
}

TEST(Train, DeterministicAndReducesLoss) {
    const auto data = xor_like(2000, 3);
    const auto val = xor_like(500, 4);
    TrainConfig cfg;
    cfg.batch_size = 128;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 15;
    cfg.seed = 9;
    const auto m0 = init_params(tiny(ArchKind::relu), 2);
    const auto a = train(m0, data, val, cfg);
    const auto b = train(m0, data, val, cfg);
    EXPECT_EQ(a.model.params, b.model.params);
    EXPECT_EQ(a.trace.val_loss, b.trace.val_loss);
    EXPECT_LT(a.trace.best_val_loss(), 0.45);
}

TEST(Train, NonFiniteLossRaisesWithTrace) {
    const auto data = xor_like(100, 5);
    TrainConfig cfg;
    cfg.batch_size = 32;
    TrainHooks hooks;
    hooks.val_loss_override = [](int e, double v) { return e == 1 ? NAN : v; };
    try {
        train(init_params(tiny(ArchKind::sine), 0), data, data, cfg, hooks);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.trace().val_loss.size(), 1u);
    }
}

TEST(Train, ConfigValidationAndTraceFile) {
    TrainConfig bad;
    bad.learning_rate = 0.0;
    EXPECT_THROW(bad.validate(), UsageError);
    TempDir tmp;
    TrainTrace t;
    t.train_loss = {0.7, 0.6};
    t.val_loss = {0.65, 0.66};
    t.best_epoch = 0;
    write_trace(t, tmp / "trace.csv");
    const auto text = slurp(tmp / "trace.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_loss,is_best");
    EXPECT_NE(text.find("\n1,0.69999999999999996,0.65000000000000002,1\n"), std::string::npos);
}
