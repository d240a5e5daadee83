#include "oracles.hpp"

#include "ptvseg/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace ptvseg;

namespace {

UNetConfig small_unet()
{
    UNetConfig c;
    c.base_channels = 2;
    c.depth = 2;
    return c;
}

// A bright square on a dark background; the mask marks the square.
Sample square_sample(std::size_t extent, std::size_t top, std::size_t left, std::size_t side)
{
    Sample s{Tensor({1, extent, extent}, 0.1), Tensor({1, extent, extent})};
    for (std::size_t y = top; y < top + side; ++y)
        for (std::size_t x = left; x < left + side; ++x)
        {
            s.image.at(0, y, x) = 0.9;
            s.mask.at(0, y, x) = 1.0;
        }
    return s;
}

std::vector<Sample> toy_set()
{
    return {square_sample(16, 2, 3, 5), square_sample(16, 8, 8, 6), square_sample(16, 4, 9, 4),
            square_sample(16, 10, 1, 5), square_sample(16, 1, 1, 3)};
}

TrainState state_with_history(const std::vector<double>& val, const TrainConfig& config)
{
    TrainState s;
    for (double v : val)
    {
        s.epoch += 1;
        s.history.push_back(EpochRecord{s.epoch, 0.0});
        record_validation(s, v, config);
    }
    return s;
}

}  // namespace

TEST(Adam, ZeroGradientsLeaveParameters)
{
    std::vector<double> p{1.0, -2.0, 3.5}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
    const auto before = p;
    adam_step(p, g, m, v, AdamHyper{}, 1);
    EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign)
{
    const AdamHyper h{1e-3, 0.9, 0.999, 1e-8};
    for (double grad : {0.5, -3.0, 1e-3})
    {
        std::vector<double> p{2.0}, g{grad}, m{0.0}, v{0.0};
        adam_step(p, g, m, v, h, 1);
        // m_hat = g and v_hat = g^2 after one bias-corrected step
        const double expected = 2.0 - h.lr * grad / (std::abs(grad) + h.eps);
        EXPECT_NEAR(p[0], expected, 1e-15);
        EXPECT_NEAR(p[0], 2.0 - h.lr * (grad > 0 ? 1.0 : -1.0), 1e-8);
    }
}

TEST(Adam, SeedFree)
{
    UNetModel a = build_unet(small_unet(), 1);
    UNetModel b = a;
    b.seed = 999;
    Rng rng(3);
    ParameterSet g = zeros_like(a.layers);
    for (auto& layer : g)
        for (auto& w : layer.weights.values())
            w = rng.uniform(-1.0, 1.0);
    TrainConfig cfg;
    OptimizerState sa = make_optimizer_state(a), sb = make_optimizer_state(b);
    apply_update(a, g, sa, cfg);
    apply_update(b, g, sb, cfg);
    EXPECT_EQ(a.layers, b.layers);
    EXPECT_EQ(sa.step, 1u);
}

TEST(EarlyStopping, FlatSequenceStopsAtBestPlusPatience)
{
    TrainConfig cfg;
    cfg.max_epochs = 1000;
    std::vector<double> val{1.0, 0.8, 0.6};
    TrainState s = state_with_history(val, cfg);
    EXPECT_EQ(s.best_epoch, 3u);
    for (int i = 1; i <= 10; ++i)
    {
        EXPECT_FALSE(should_stop(s, cfg)) << i;
        s.epoch += 1;
        s.history.push_back(EpochRecord{s.epoch, 0.0});
        record_validation(s, 0.6, cfg);
    }
    EXPECT_TRUE(should_stop(s, cfg));
    EXPECT_EQ(s.epoch, s.best_epoch + 10);
}

TEST(EarlyStopping, SteadyImprovementRunsToMaxEpochs)
{
    TrainConfig cfg;
    cfg.max_epochs = 40;
    std::vector<double> val;
    double v = 1.0;
    for (int i = 0; i < 39; ++i, v *= 0.99)
        val.push_back(v);
    TrainState s = state_with_history(val, cfg);
    EXPECT_FALSE(should_stop(s, cfg));
    s.epoch += 1;
    s.history.push_back(EpochRecord{s.epoch, 0.0});
    record_validation(s, v, cfg);
    EXPECT_TRUE(should_stop(s, cfg));
    EXPECT_EQ(s.epochs_since_improvement, 0u);
}

TEST(EarlyStopping, SubThresholdImprovementCountsAsFlat)
{
    TrainConfig cfg;
    cfg.max_epochs = 1000;
    std::vector<double> val{1.0};
    double v = 1.0;
    for (int i = 0; i < 10; ++i)
    {
        v -= v * cfg.min_delta / 2;
        val.push_back(v);
    }
    const TrainState s = state_with_history(val, cfg);
    EXPECT_TRUE(should_stop(s, cfg));
    EXPECT_EQ(s.epoch, 11u);
    // the tracked best is still the running minimum
    EXPECT_EQ(s.best_val_loss, v);
    EXPECT_EQ(s.best_epoch, 11u);
}

TEST(EarlyStopping, NeverBeforePatience)
{
    TrainConfig cfg;
    cfg.patience = 4;
    cfg.max_epochs = 1000;
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial)
    {
        TrainState s;
        std::size_t last_significant = 0;
        double best = INFINITY;
        for (std::size_t e = 1; e <= 30; ++e)
        {
            const double v = rng.uniform(0.5, 1.0);
            if (!std::isfinite(best) || v < best - cfg.min_delta * best)
                last_significant = e;
            best = std::min(best, v);
            s.epoch = e;
            s.history.push_back(EpochRecord{e, 0.0});
            record_validation(s, v, cfg);
            EXPECT_EQ(should_stop(s, cfg), e - last_significant >= cfg.patience);
            EXPECT_EQ(s.best_val_loss, best);
        }
    }
}

TEST(Training, DeterministicAndFinite)
{
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.seed = 5;
    const auto data = toy_set();
    TrainState a = make_train_state(build_unet(small_unet(), 2)), b = make_train_state(build_unet(small_unet(), 2));
    for (int e = 0; e < 4; ++e)
    {
        EXPECT_EQ(train_epoch(a, data, cfg), train_epoch(b, data, cfg));
        EXPECT_TRUE(std::isfinite(a.history.back().train_loss));
    }
    EXPECT_EQ(a.model, b.model);
    EXPECT_THROW(train_epoch(a, std::span<const Sample>(), cfg), std::invalid_argument);
}

TEST(Training, ShortFinalBatchMatchesManualSteps)
{
    // 5 samples, batch 2: three updates, the last on a single sample
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.seed = 17;
    const auto data = toy_set();
    TrainState s = make_train_state(build_unet(small_unet(), 4));
    const UNetModel start = s.model;
    train_epoch(s, data, cfg);
    EXPECT_EQ(s.optimizer.step, 3u);

    std::vector<std::size_t> order{0, 1, 2, 3, 4};
    Rng rng = Rng::derive(cfg.seed, 0);
    rng.shuffle(std::span<std::size_t>(order));
    UNetModel m = start;
    OptimizerState opt = make_optimizer_state(m);
    for (std::size_t begin = 0; begin < 5; begin += 2)
    {
        const std::size_t end = std::min<std::size_t>(5, begin + 2);
        ParameterSet g = zeros_like(m.layers);
        for (std::size_t i = begin; i < end; ++i)
        {
            const auto f = unet_forward(m, data[order[i]].image);
            const auto l = loss_from_logits(f.logits, data[order[i]].mask, cfg.loss);
            accumulate(g, unet_backward_logits(m, f.cache, l.grad), 1.0 / static_cast<double>(end - begin));
        }
        apply_update(m, g, opt, cfg);
    }
    EXPECT_EQ(m, s.model);
}

TEST(Training, LossDecreasesOnSingleSample)
{
    for (LossKind kind : {LossKind::Bce, LossKind::Dice})
    {
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 1;
        cfg.loss = kind;
        const std::vector<Sample> one{square_sample(16, 4, 4, 6)};
        TrainState s = make_train_state(build_unet(small_unet(), 6));
        const double before = evaluate_loss(s.model, one, kind);
        for (int step = 0; step < 50; ++step)
            train_epoch(s, one, cfg);
        EXPECT_LT(evaluate_loss(s.model, one, kind), before) << loss_name(kind);
    }
}

TEST(Evaluation, PureAndLn2AtOneHalf)
{
    UNetModel m = build_unet(small_unet(), 1);
    const auto data = toy_set();
    const UNetModel copy = m;
    const double a = evaluate_loss(m, data, LossKind::Bce);
    EXPECT_EQ(a, evaluate_loss(m, data, LossKind::Bce));
    EXPECT_EQ(m, copy);

    for (auto& layer : m.layers)
    {
        layer.weights.fill(0.0);
        layer.bias.fill(0.0);
    }
    EXPECT_NEAR(evaluate_loss(m, data, LossKind::Bce), std::numbers::ln2, 1e-12);
}

TEST(Training, TrainLoopKeepsBestModelAndLog)
{
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.max_epochs = 6;
    cfg.patience = 3;
    const auto data = toy_set();
    std::size_t callbacks = 0;
    const TrainState s = train(build_unet(small_unet(), 3), data, data, cfg,
                               [&](const TrainState&, const EpochRecord&) { ++callbacks; });
    EXPECT_EQ(callbacks, s.history.size());
    EXPECT_TRUE(s.history.back().stopped);
    double best = INFINITY;
    std::size_t best_epoch = 0;
    for (const auto& r : s.history)
        if (r.val_loss < best)
        {
            best = r.val_loss;
            best_epoch = r.epoch;
        }
    EXPECT_EQ(s.best_val_loss, best);
    EXPECT_EQ(s.best_epoch, best_epoch);
    EXPECT_EQ(evaluate_loss(s.best_model, data, cfg.loss), best);

    const auto path = std::filesystem::temp_directory_path() / "ptvseg_epochs.csv";
    write_epoch_log(s.history, path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    EXPECT_EQ(text.str().rfind("epoch,train_loss,val_loss,stopped\r\n", 0), 0u);
    std::filesystem::remove(path);
}

TEST(TrainConfig, Validation)
{
    TrainConfig c;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.patience = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
