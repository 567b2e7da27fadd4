#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "anatpaste/classifier.hpp"
#include "anatpaste/error.hpp"
#include "support/oracles.hpp"

namespace {

using namespace anatpaste;
using nn::MlpModel;

TEST(Descriptor, ConstantImage) {
    const nn::Descriptor d{4, 8};
    const auto f = nn::extract_features(GrayImage(16, 16, 0.5), d);
    ASSERT_EQ(f.size(), d.dimension());
    for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(f[static_cast<std::size_t>(i)], 0.5);
    for (int b = 0; b < 8; ++b) EXPECT_DOUBLE_EQ(f[static_cast<std::size_t>(16 + b)], b == 4 ? 1.0 : 0.0);
}

TEST(Descriptor, MatchesDoubleLoopOracle) {
    Rng rng(1);
    const GrayImage im = oracle::random_image(rng, 37, 29);
    const nn::Descriptor d{5, 7};
    const auto f = nn::extract_features(im, d);
    for (int gy = 0; gy < 5; ++gy) {
        for (int gx = 0; gx < 5; ++gx) {
            const int x0 = gx * 37 / 5, x1 = (gx + 1) * 37 / 5, y0 = gy * 29 / 5, y1 = (gy + 1) * 29 / 5;
            double sum = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) sum += im.at(x, y);
            }
            EXPECT_NEAR(f[static_cast<std::size_t>(gy * 5 + gx)], sum / ((x1 - x0) * (y1 - y0)), 1e-12);
        }
    }
    std::vector<double> hist(7, 0.0);
    for (double v : im.pixels()) hist[static_cast<std::size_t>(std::min(6, static_cast<int>(v * 7)))] += 1.0;
    double total = 0.0;
    for (int b = 0; b < 7; ++b) {
        EXPECT_NEAR(f[static_cast<std::size_t>(25 + b)], hist[static_cast<std::size_t>(b)] / (37 * 29), 1e-12);
        total += f[static_cast<std::size_t>(25 + b)];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Descriptor, ImageSmallerThanGridThrows) {
    try {
        nn::extract_features(GrayImage(8, 8), nn::Descriptor{16, 32});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvalidDimensions);
    }
}

TEST(Forward, ZeroModelGivesZeroLogits) {
    const std::vector<std::size_t> sizes{5, 4, 3, 2};
    const MlpModel m = MlpModel::zeros(sizes);
    const auto r = nn::forward(m, std::vector<double>{1, 2, 3, 4, 5});
    EXPECT_EQ(r.logits[0], 0.0);
    EXPECT_EQ(r.logits[1], 0.0);
    ASSERT_EQ(r.penultimate.size(), 3u);
    for (double v : r.penultimate) EXPECT_EQ(v, 0.0);
}

TEST(Forward, HandComputedTwoByTwo) {
    const std::vector<std::size_t> sizes{2, 2, 2};
    MlpModel m = MlpModel::zeros(sizes);
    auto layers = m.layers();
    layers[0].weights = {1, 0, 0, 1};  // identity
    layers[0].bias = {0, -1};
    layers[1].weights = {2, 0, 1, 1};
    layers[1].bias = {0.5, 0};
    // hidden = relu(x + (0,-1)) = relu(3, -3) = (3, 0); logits = (2*3+0.5, 3+0).
    const auto r = nn::forward(m, std::vector<double>{3, -2});
    EXPECT_EQ(r.penultimate, (std::vector<double>{3, 0}));
    EXPECT_DOUBLE_EQ(r.logits[0], 6.5);
    EXPECT_DOUBLE_EQ(r.logits[1], 3.0);
    EXPECT_THROW(nn::forward(m, std::vector<double>{1, 2, 3}), Error);
}

TEST(CrossEntropy, AnalyticCases) {
    EXPECT_NEAR(nn::cross_entropy({0, 0}, 0), std::numbers::ln2, 1e-15);
    EXPECT_NEAR(nn::cross_entropy({0, 0}, 1), std::numbers::ln2, 1e-15);
    EXPECT_LT(nn::cross_entropy({20, -20}, 0), 1e-8);
    EXPECT_NEAR(nn::cross_entropy({800, -800}, 1), 1600.0, 1e-9);
    const auto p = nn::softmax({1.3, -0.4});
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(CrossEntropy, GradientMatchesFiniteDifference) {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        std::array<double, 2> z{rng.uniform(-5, 5), rng.uniform(-5, 5)};
        const int label = t % 2;
        const auto g = nn::cross_entropy_grad(z, label);
        for (int k = 0; k < 2; ++k) {
            auto zp = z, zm = z;
            zp[static_cast<std::size_t>(k)] += 1e-6;
            zm[static_cast<std::size_t>(k)] -= 1e-6;
            const double fd = (nn::cross_entropy(zp, label) - nn::cross_entropy(zm, label)) / 2e-6;
            EXPECT_NEAR(g[static_cast<std::size_t>(k)], fd, 1e-7);
        }
    }
}

TEST(Backward, MatchesCentralDifferencesOnRandomNets) {
    Rng rng(3);
    for (int t = 0; t < 30; ++t) {
        std::vector<std::size_t> sizes{static_cast<std::size_t>(rng.uniform_int(1, 6))};
        const auto hidden = rng.uniform_int(1, 3);
        for (std::int64_t l = 0; l < hidden; ++l) sizes.push_back(static_cast<std::size_t>(rng.uniform_int(1, 10)));
        sizes.push_back(2);
        MlpModel m = MlpModel::random(sizes, rng);
        std::vector<double> x(sizes[0]);
        for (double& v : x) v = rng.uniform(-2, 2);
        const int label = static_cast<int>(rng.uniform_int(0, 1));
        const auto g = nn::backward(m, x, label);
        for (std::size_t l = 0; l < m.layers().size(); ++l) {
            auto check = [&](double& param, double analytic) {
                const double saved = param;
                const double h = 1e-5;
                param = saved + h;
                const double up = nn::cross_entropy(nn::forward(m, x).logits, label);
                param = saved - h;
                const double down = nn::cross_entropy(nn::forward(m, x).logits, label);
                param = saved;
                const double fd = (up - down) / (2 * h);
                EXPECT_LE(std::abs(analytic - fd), 1e-4 * std::max({1e-3, std::abs(fd), std::abs(analytic)}));
            };
            auto& layer = m.layers()[l];
            for (std::size_t i = 0; i < layer.weights.size(); ++i) check(layer.weights[i], g.weights[l][i]);
            for (std::size_t i = 0; i < layer.bias.size(); ++i) check(layer.bias[i], g.bias[l][i]);
        }
    }
}

TEST(Backward, ZeroInputGivesZeroFirstLayerWeightGradient) {
    const std::vector<std::size_t> sizes{4, 3, 2};
    Rng rng(4);
    MlpModel m = MlpModel::random(sizes, rng);
    for (auto& l : m.layers()) std::fill(l.bias.begin(), l.bias.end(), 0.0);
    const auto g = nn::backward(m, std::vector<double>(4, 0.0), 1);
    for (double v : g.weights[0]) EXPECT_EQ(v, 0.0);
    ASSERT_EQ(g.weights.size(), m.layers().size());
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        EXPECT_EQ(g.weights[l].size(), m.layers()[l].weights.size());
        EXPECT_EQ(g.bias[l].size(), m.layers()[l].bias.size());
    }
}

TEST(Sgd, RecurrenceClosedForms) {
    const std::vector<std::size_t> sizes{1, 2};
    MlpModel m = MlpModel::zeros(sizes);
    m.layers()[0].weights = {1.0, 1.0};

    // Two steps with a constant gradient g and no weight decay.
    auto opt = nn::OptimState::for_model(m, 0.9, 0.0);
    auto g = nn::Gradients::like(m);
    g.weights[0] = {0.5, 0.5};
    nn::sgd_step(m, g, opt, 0.1);
    nn::sgd_step(m, g, opt, 0.1);
    EXPECT_NEAR(m.layers()[0].weights[0], 1.0 - 0.1 * 0.5 - 0.1 * (0.9 * 0.5 + 0.5), 1e-15);

    // Weight decay alone shrinks parameters by (1 - lr * wd).
    MlpModel d = MlpModel::zeros(sizes);
    d.layers()[0].weights = {2.0, -4.0};
    auto opt2 = nn::OptimState::for_model(d, 0.9, 0.01);
    nn::sgd_step(d, nn::Gradients::like(d), opt2, 0.5);
    EXPECT_NEAR(d.layers()[0].weights[0], 2.0 * (1 - 0.5 * 0.01), 1e-15);
    EXPECT_NEAR(d.layers()[0].weights[1], -4.0 * (1 - 0.5 * 0.01), 1e-15);

    // Zero gradient and zero decay leave parameters alone; velocity decays.
    MlpModel z = d;
    auto opt3 = nn::OptimState::for_model(z, 0.9, 0.0);
    opt3.velocity.weights[0] = {1.0, 1.0};
    const MlpModel before = z;
    nn::sgd_step(z, nn::Gradients::like(z), opt3, 0.0);
    EXPECT_EQ(z, before);
    EXPECT_DOUBLE_EQ(opt3.velocity.weights[0][0], 0.9);
}

TEST(CosineLr, EndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(nn::cosine_lr(0, 100, 0.03), 0.03);
    EXPECT_DOUBLE_EQ(nn::cosine_lr(100, 100, 0.03), 0.0);
    EXPECT_NEAR(nn::cosine_lr(50, 100, 0.03), 0.015, 1e-17);
    for (std::size_t t = 1; t <= 100; ++t) EXPECT_LE(nn::cosine_lr(t, 100, 0.03), nn::cosine_lr(t - 1, 100, 0.03));
    EXPECT_THROW(nn::cosine_lr(0, 0, 0.03), Error);
    EXPECT_THROW(nn::cosine_lr(5, 4, 0.03), Error);
}

TEST(InputScaler, FoldedModelMatchesScaledInput) {
    Rng rng(5);
    std::vector<nn::FeatureVector> feats(20, nn::FeatureVector(6));
    for (auto& f : feats) {
        for (double& v : f) v = rng.uniform(0.2, 0.4);
    }
    for (auto& f : feats) f[3] = 0.5;  // constant column falls back to the floor
    const auto scaler = nn::InputScaler::fit(feats, 0.01);
    EXPECT_DOUBLE_EQ(scaler.scale[3], 0.01);
    const std::vector<std::size_t> sizes{6, 5, 2};
    const MlpModel m = MlpModel::random(sizes, rng);
    const MlpModel folded = nn::fold_input_scaler(m, scaler);
    for (const auto& f : feats) {
        const auto a = nn::forward(m, scaler.apply(f));
        const auto b = nn::forward(folded, f);
        EXPECT_NEAR(a.logits[0], b.logits[0], 1e-12);
        EXPECT_NEAR(a.logits[1], b.logits[1], 1e-12);
    }
}

// Two separable clusters: originals near 0, "augmentations" near 1.
nn::TrainResult train_toy(std::size_t epochs, std::size_t workers, std::uint64_t seed) {
    nn::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 8;
    cfg.hidden = {8, 6, 4};
    cfg.seed = seed;
    cfg.workers = workers;
    return nn::train_pairs(
        32, 3,
        [](std::size_t i) {
            Rng r = Rng::derive(100, {i});
            return nn::FeatureVector{r.uniform(0, 0.2), r.uniform(0, 0.2), r.uniform(0, 0.2)};
        },
        [](std::size_t, Rng& r) { return nn::FeatureVector{r.uniform(0.8, 1), r.uniform(0.8, 1), r.uniform(0.8, 1)}; },
        cfg);
}

TEST(Train, SeparableFixtureLossDecreasesMonotonically) {
    const auto r = train_toy(10, 1, 1);
    ASSERT_EQ(r.log.size(), 10u);
    for (std::size_t e = 1; e < r.log.size(); ++e) EXPECT_LT(r.log[e].mean_loss, r.log[e - 1].mean_loss) << e;
    EXPECT_EQ(r.log[0].loss_terms, 64u);
    EXPECT_EQ(r.log[0].batches, 4u);
}

TEST(Train, DeterministicAndIndependentOfWorkers) {
    const auto a = train_toy(3, 1, 7);
    const auto b = train_toy(3, 1, 7);
    const auto c = train_toy(3, 3, 7);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.model, c.model);
    EXPECT_EQ(a.log.back().mean_loss, c.log.back().mean_loss);
    EXPECT_FALSE(a.model == train_toy(3, 1, 8).model);
}

TEST(Train, BatchOfSixtyFourNormalsHasOneHundredTwentyEightTerms) {
    nn::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.hidden = {4};
    const auto r = nn::train_pairs(
        64, 2, [](std::size_t) { return nn::FeatureVector{0, 0}; },
        [](std::size_t, Rng&) { return nn::FeatureVector{1, 1}; }, cfg);
    EXPECT_EQ(r.log[0].batches, 1u);
    EXPECT_EQ(r.log[0].loss_terms, 128u);
    cfg.batch_counting = nn::BatchCounting::samples;
    const auto s = nn::train_pairs(
        64, 2, [](std::size_t) { return nn::FeatureVector{0, 0}; },
        [](std::size_t, Rng&) { return nn::FeatureVector{1, 1}; }, cfg);
    EXPECT_EQ(s.log[0].batches, 2u);
}

TEST(Train, EmptyDatasetAndHookSelection) {
    nn::TrainConfig cfg;
    EXPECT_THROW(nn::train_pairs(
                     0, 2, [](std::size_t) { return nn::FeatureVector{0, 0}; },
                     [](std::size_t, Rng&) { return nn::FeatureVector{1, 1}; }, cfg),
                 Error);
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.hidden = {3};
    std::vector<MlpModel> seen;
    const auto r = nn::train_pairs(
        8, 2, [](std::size_t i) { return nn::FeatureVector{0.1 * static_cast<double>(i), 0}; },
        [](std::size_t, Rng& g) { return nn::FeatureVector{g.uniform(), 1}; }, cfg,
        [&](const MlpModel& m, std::size_t epoch) {
            seen.push_back(m);
            return epoch == 1 ? 1.0 : 0.0;
        });
    EXPECT_EQ(r.best_epoch, 1u);
    EXPECT_EQ(r.model, seen[1]);
}

TEST(Checkpoint, RoundTripIsExact) {
    Rng rng(6);
    const std::vector<std::size_t> sizes{7, 5, 3, 2};
    const MlpModel m = MlpModel::random(sizes, rng);
    std::stringstream ss;
    nn::save_checkpoint(ss, m, {2, 3});
    const auto [back, d] = nn::load_checkpoint(ss);
    EXPECT_EQ(back, m);
    EXPECT_EQ(d.grid_size, 2);
    EXPECT_EQ(d.histogram_bins, 3);
}

TEST(Checkpoint, CorruptInputIsAParseError) {
    std::stringstream ss("anatpaste-mlp 1\ndescriptor 2 2\nlayers 2 6 2\n0x1p+0 nonsense\n");
    try {
        nn::load_checkpoint(ss);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ParseError);
    }
}

}  // namespace
