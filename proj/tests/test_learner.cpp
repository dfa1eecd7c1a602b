#include <gtest/gtest.h>

#include <random>

#include "maskmend/corpus.hpp"
#include "maskmend/learner.hpp"
#include "maskmend/metrics.hpp"
#include "maskmend/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace maskmend;

namespace {

GrayImage ramp_image(int h, int w)
{
    std::vector<double> v;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            v.push_back((x + 2 * y) / static_cast<double>(w + 2 * h));
    return {h, w, v};
}

struct Toy {
    std::vector<FeatureGrid> features;
    std::vector<BinaryMask> masks;

    std::vector<TrainingExample> examples() const
    {
        std::vector<TrainingExample> ex;
        for (std::size_t i = 0; i < features.size(); ++i)
            ex.push_back({&features[i], &masks[i]});
        return ex;
    }
};

Toy toy_corpus(int count)
{
    SyntheticCorpusSpec spec;
    spec.train_count = count;
    spec.test_count = 1;
    spec.size = 24;
    spec.min_radius = 5;
    spec.max_radius = 7;
    Toy t;
    for (const auto& item : generate_corpus(spec))
        if (item.split == Split::train) {
            t.features.push_back(extract_features(item.image));
            t.masks.push_back(item.clean);
        }
    return t;
}

} // namespace

TEST(Features, ConstantImage)
{
    const GrayImage img(6, 7, std::vector<double>(42, 0.5));
    const auto f = extract_features(img);
    for (std::size_t p = 0; p < f.pixels(); ++p) {
        const auto x = f.at(p);
        for (int r = 0; r < 3; ++r) {
            EXPECT_EQ(x[1 + r], 0.5);
            EXPECT_EQ(x[4 + r], 0.0);
        }
    }
}

TEST(Features, SingleBrightPixelIsLocal)
{
    std::vector<double> v(15 * 15, 0.0);
    v[7 * 15 + 7] = 1.0;
    const auto f = extract_features(GrayImage(15, 15, v));
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) {
            const auto feat = f.at(static_cast<std::size_t>(y) * 15 + x);
            const int cheb = std::max(std::abs(x - 7), std::abs(y - 7));
            for (int r = 0; r < 3; ++r) {
                const int rad = kBoxRadii[r];
                if (cheb <= rad)
                    EXPECT_GT(feat[4 + r], 0.0);
                else
                    EXPECT_EQ(feat[4 + r], 0.0);
            }
        }
}

TEST(Features, CornerIsFiniteAndCoordinatesNormalized)
{
    const auto f = extract_features(ramp_image(5, 9));
    for (double v : f.values)
        EXPECT_TRUE(std::isfinite(v));
    const auto corner = f.at(0);
    EXPECT_EQ(corner[7], 0.0);
    EXPECT_EQ(corner[8], 0.0);
    const auto last = f.at(f.pixels() - 1);
    EXPECT_EQ(last[7], 1.0);
    EXPECT_EQ(last[8], 1.0);
    // Clamped window at the corner: radius-1 mean over replicated border.
    const GrayImage g(2, 2, {0.0, 1.0, 1.0, 1.0});
    const auto fg = extract_features(g);
    EXPECT_NEAR(fg.at(0)[1], 5.0 / 9.0, 1e-15);
}

TEST(Classifier, ShapesAndValidation)
{
    EXPECT_EQ(PixelClassifier::kParamCount, 9u * 32 + 32 + 32 * 32 + 32 + 32 + 1);
    EXPECT_THROW(PixelClassifier(1.0, 1), InvariantError);
    EXPECT_THROW(PixelClassifier(-0.1, 1), InvariantError);
    EXPECT_THROW(PixelClassifier(0.2, std::vector<double>(10, 0.0), 0), InvariantError);
    EXPECT_EQ(PixelClassifier(0.2, 5), PixelClassifier(0.2, 5));
    EXPECT_NE(PixelClassifier(0.2, 5), PixelClassifier(0.2, 6));
}

TEST(Classifier, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(99);
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> params(PixelClassifier::kParamCount);
        std::vector<std::vector<double>> feats(4, std::vector<double>(kFeatureCount));
        do {
            for (auto& p : params)
                p = gauss(rng);
            for (auto& f : feats)
                for (auto& v : f)
                    v = unit(rng);
        } while (oracle::relu_margin(params, feats) < 1e-3);
        std::vector<LabelledPixel> batch;
        for (const auto& f : feats)
            batch.push_back({f, unit(rng) < 0.5 ? 0.0 : 1.0});
        std::vector<double> grad;
        loss_and_gradient(params, batch, grad);
        const auto fd = oracle::finite_difference_gradient(
            params, [&](const std::vector<double>& q) { return mean_loss(q, batch); });
        EXPECT_LT(oracle::relative_error(grad, fd), 1e-3) << "trial " << trial;
    }
}

TEST(Train, DeterministicInSeed)
{
    const auto toy = toy_corpus(3);
    const auto ex = toy.examples();
    TrainConfig cfg;
    cfg.seed = 4;
    const PixelClassifier init(0.2, 4);
    const auto a = train_epoch(train_epoch(init, ex, cfg), ex, cfg);
    const auto b = train_epoch(train_epoch(init, ex, cfg), ex, cfg);
    EXPECT_EQ(a, b);
    cfg.seed = 5;
    EXPECT_NE(train_epoch(init, ex, cfg), train_epoch(train_epoch(init, ex, cfg), ex, cfg));
    EXPECT_EQ(a.epochs_trained(), 2);
}

TEST(Train, ZeroLearningRateKeepsWeights)
{
    const auto toy = toy_corpus(2);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    const PixelClassifier init(0.2, 9);
    const auto after = train_epoch(init, toy.examples(), cfg);
    EXPECT_TRUE(std::equal(after.params().begin(), after.params().end(), init.params().begin()));
}

TEST(Train, ConstantLabelLossDecreases)
{
    auto toy = toy_corpus(2);
    for (auto& m : toy.masks)
        m = BinaryMask(m.height(), m.width(), std::vector<std::uint8_t>(m.size(), 1));
    const auto ex = toy.examples();
    TrainConfig cfg;
    cfg.dropout_rate = 0.0;
    PixelClassifier model(0.0, 2);
    double previous = 1e300;
    for (int epoch = 0; epoch < 3; ++epoch) {
        auto r = train_epoch_with_loss(model, ex, cfg);
        EXPECT_LT(r.mean_loss, previous);
        previous = r.mean_loss;
        model = r.model;
    }
}

TEST(Train, DimensionMismatchRejected)
{
    const auto toy = toy_corpus(1);
    const auto wrong = BinaryMask::zeros(3, 3);
    const std::vector<TrainingExample> ex{{&toy.features[0], &wrong}};
    EXPECT_THROW(train_epoch(PixelClassifier(0.2, 1), ex, TrainConfig{}), ParameterError);
}

TEST(Train, DivergenceIsReported)
{
    const auto toy = toy_corpus(2);
    TrainConfig cfg;
    cfg.learning_rate = 1e200;
    EXPECT_THROW(train_epoch(PixelClassifier(0.0, 1), toy.examples(), cfg), TrainingDivergence);
}

TEST(Train, InvalidConfigRejected)
{
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = {};
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = {};
    cfg.learning_rate = -1;
    EXPECT_THROW(cfg.validate(), ParameterError);
    cfg = {};
    cfg.final_lr_fraction = 1.5;
    EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Train, CosineRateSchedule)
{
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.learning_rate = 0.2;
    for (int e = 1; e <= 5; ++e)
        EXPECT_EQ(cfg.learning_rate_at(e), 0.2);
    cfg.final_lr_fraction = 0.1;
    EXPECT_DOUBLE_EQ(cfg.learning_rate_at(1), 0.2);
    EXPECT_DOUBLE_EQ(cfg.learning_rate_at(3), 0.2 * 0.55);
    EXPECT_DOUBLE_EQ(cfg.learning_rate_at(5), 0.02);
    for (int e = 2; e <= 5; ++e)
        EXPECT_LT(cfg.learning_rate_at(e), cfg.learning_rate_at(e - 1));
    cfg.epochs = 1;
    EXPECT_EQ(cfg.learning_rate_at(1), 0.2);
}

TEST(Predict, DeterministicWithoutDropout)
{
    const PixelClassifier m(0.3, 7);
    const auto img = ramp_image(8, 8);
    EXPECT_EQ(predict(m, img), predict(m, img));
    EXPECT_EQ(predict(m, img, false, 1), predict(m, img, false, 2));
}

TEST(Predict, DropoutSeedsDiffer)
{
    const PixelClassifier m(0.3, 7);
    const auto img = ramp_image(8, 8);
    const auto a = predict(m, img, true, 1);
    const auto b = predict(m, img, true, 2);
    EXPECT_NE(a, b);
    EXPECT_EQ(a, predict(m, img, true, 1));
}

TEST(Predict, ZeroDropoutEqualsDeterministic)
{
    const PixelClassifier m(0.0, 7);
    const auto img = ramp_image(8, 8);
    EXPECT_EQ(predict(m, img, true, 3), predict(m, img));
}

TEST(ModelFile, RoundTripAtFloatPrecision)
{
    const auto dir = test::scratch("model_file");
    const PixelClassifier m(0.25, 11);
    save_model(m, dir / "m.bin");
    const auto back = load_model(dir / "m.bin");
    EXPECT_EQ(back.dropout_rate(), 0.25);
    ASSERT_EQ(back.params().size(), m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i)
        EXPECT_EQ(back.params()[i], static_cast<double>(static_cast<float>(m.params()[i])));
    save_model(back, dir / "n.bin");
    EXPECT_EQ(load_model(dir / "n.bin"), back);
}

TEST(ModelFile, RejectsGarbage)
{
    const auto dir = test::scratch("model_bad");
    test::write_bytes(dir / "x.bin", "NOPE\x01");
    EXPECT_THROW(load_model(dir / "x.bin"), FormatError);
    save_model(PixelClassifier(0.1, 1), dir / "ok.bin");
    std::ifstream in(dir / "ok.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    test::write_bytes(dir / "short.bin", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(load_model(dir / "short.bin"), FormatError);
    test::write_bytes(dir / "long.bin", bytes + "x");
    EXPECT_THROW(load_model(dir / "long.bin"), FormatError);
}

TEST(Train, LearnsCleanCorpus)
{
    SyntheticCorpusSpec spec;
    const auto data = make_clean_dataset(generate_corpus(spec));
    TrainConfig cfg;
    std::vector<TrainingExample> ex;
    std::vector<BinaryMask> masks;
    for (const auto& s : data.train)
        masks.push_back(s.clean);
    for (std::size_t i = 0; i < masks.size(); ++i)
        ex.push_back({&data.train[i].features, &masks[i]});
    PixelClassifier model(cfg.dropout_rate, cfg.seed);
    double best = 0.0;
    for (int epoch = 1; epoch <= 10; ++epoch) {
        model = train_epoch(model, ex, cfg);
        best = std::max(best, evaluate_model(model, data.test).d_clean);
    }
    EXPECT_GE(best, 0.85);
}
