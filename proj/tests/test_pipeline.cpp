#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "polcolor/checkpoint.hpp"
#include "polcolor/errors.hpp"
#include "polcolor/evalmetrics.hpp"
#include "polcolor/pipeline.hpp"
#include "polcolor/synthdata.hpp"

using namespace polcolor;

namespace {

TrainingScene make_scene(int size, std::uint64_t seed) {
    SceneSpec spec;
    spec.width = spec.height = size;
    spec.seed = seed;
    const Scene s = render_scene(spec, default_archetypes());
    return {s.vv, s.covariance};
}

TrainConfig small_config(int epochs) {
    TrainConfig c;
    c.batch_pixels = 64;
    c.patch = 16;
    c.epochs = epochs;
    c.seed = 3;
    c.adam.learning_rate = 1e-3;
    return c;
}

const TranslatorConfig kSmallTranslator{{32, 16}, 16, kNumParams, kDefaultBins};
const ExtractorConfig kSmallExtractor{{4, 4, 8, 8, 8, 8, 8}};

double pooled_mean(const nn::Tensor<double>& t) { return t.data.mean(); }

double pooled_std(const nn::Tensor<double>& t) {
    const double m = t.data.mean();
    return std::sqrt((t.data.array() - m).square().mean());
}

}  // namespace

TEST(Preprocess, Endpoints) {
    EXPECT_DOUBLE_EQ(preprocess_intensity(1.0), 1.0);
    EXPECT_NEAR(preprocess_intensity(std::pow(10.0, -2.5)), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(preprocess_intensity(10.0), 1.0);
    EXPECT_DOUBLE_EQ(preprocess_intensity(0.0), 0.0);
    EXPECT_DOUBLE_EQ(preprocess_intensity(1e-9), 0.0);
    EXPECT_NEAR(preprocess_intensity(0.1), 0.6, 1e-12);
    EXPECT_NEAR(preprocess_intensity(0.1, -10.0), 0.0, 1e-12);
}

TEST(Preprocess, NegativeOrNanRejected) {
    EXPECT_THROW(preprocess_intensity(-1e-3), InvalidInput);
    EXPECT_THROW(preprocess_intensity(std::nan("")), InvalidInput);
}

TEST(Hypercolumn, DocumentedLengths) {
    EXPECT_EQ(ExtractorConfig::desk().hypercolumn_length(), 145);
    EXPECT_EQ(ExtractorConfig::full().hypercolumn_length(), 1153);
    const ExtractorConfig e{{1, 2, 3, 4, 5, 6, 7}};
    EXPECT_EQ(e.hypercolumn_length(), 29);
}

TEST(Extractor, LayerLayoutAndTaps) {
    const ExtractorConfig e = ExtractorConfig::desk();
    const auto layers = e.layers();
    ASSERT_EQ(layers.size(), 16u);
    int convs = 0, pools = 0;
    for (const auto& l : layers) {
        convs += l.kind == nn::LayerKind::Conv3x3;
        pools += l.kind == nn::LayerKind::MaxPool2x2;
    }
    EXPECT_EQ(convs, 7);
    EXPECT_EQ(pools, 2);
    EXPECT_EQ(e.taps(), (std::vector<int>{1, 3, 6, 8, 11, 13, 15}));
    EXPECT_EQ(e.tap_strides(), (std::vector<int>{1, 1, 2, 2, 4, 4, 4}));
}

TEST(Extractor, DeepTapsHaveQuarterResolution) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 1);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nn::Tensor<double> patch({1, 1, 16, 16});
    for (auto& v : patch.data.reshaped()) v = u(rng);
    nn::Tape<double> tape;
    const auto features = net.raw_features(patch, &tape);
    ASSERT_EQ(features.size(), 7u);
    for (const auto& f : features) EXPECT_EQ(f.shape.height, 16);
    EXPECT_EQ(tape.outputs.at(15).shape, (nn::Shape{1, 32, 4, 4}));
    EXPECT_EQ(tape.outputs.at(6).shape, (nn::Shape{1, 16, 8, 8}));
}

TEST(Extractor, ConstantInputGivesConstantFeatures) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 4);
    const nn::Tensor<double> patch({1, 1, 16, 16}, Eigen::MatrixXd::Constant(256, 1, 0.4));
    for (const auto& f : net.raw_features(patch))
        for (int c = 0; c < f.shape.channels; ++c) {
            const auto p = f.plane(0, c);
            EXPECT_LT((p.array() - p(0, 0)).abs().maxCoeff(), 1e-12);
        }
    const std::vector<nn::Tensor<double>> patches{patch};
    net.set_norm_stats(fit_norm_stats<double>(patches, net));
    const auto features = net.extract_features(patch);
    const std::vector<int> pixels{0, 77, 255};
    const auto cols = net.hypercolumns(patch, features, pixels);
    EXPECT_LT((cols.col(0) - cols.col(1)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((cols.col(0) - cols.col(2)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(cols(0, 0), 0.4);
}

TEST(Extractor, OddSizedPatchRejected) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 4);
    EXPECT_THROW(net.raw_features(nn::Tensor<double>({1, 1, 10, 16})), InvalidInput);
}

TEST(NormStats, StandardizesFittingSet) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 5);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<nn::Tensor<double>> patches(3, nn::Tensor<double>({1, 1, 16, 16}));
    for (auto& p : patches)
        for (auto& v : p.data.reshaped()) v = u(rng);
    net.set_norm_stats(fit_norm_stats<double>(patches, net));

    std::vector<std::vector<nn::Tensor<double>>> normalized;
    for (const auto& p : patches) normalized.push_back(net.extract_features(p));
    for (std::size_t k = 0; k < 7; ++k) {
        nn::Tensor<double> joined({1, 1, 1, 1});
        joined.data.resize(normalized[0][k].data.size() * 3, 1);
        for (std::size_t i = 0; i < 3; ++i)
            joined.data.middleRows(static_cast<Eigen::Index>(i) * normalized[0][k].data.size(),
                                   normalized[0][k].data.size()) = normalized[i][k].data.reshaped();
        EXPECT_NEAR(pooled_mean(joined), 0.0, 1e-6);
        EXPECT_NEAR(pooled_std(joined), 1.0, 1e-6);
    }

    const NormStats again = compute_norm_stats<double>(normalized);
    auto twice = normalized;
    for (auto& layers : twice) apply_norm_stats<double>(layers, again);
    for (std::size_t i = 0; i < twice.size(); ++i)
        for (std::size_t k = 0; k < 7; ++k)
            EXPECT_LT((twice[i][k].data - normalized[i][k].data).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormStats, ConstantLayerFloorsDeviation) {
    const std::vector<std::vector<nn::Tensor<double>>> samples{
        {nn::Tensor<double>({1, 2, 4, 4}, Eigen::MatrixXd::Constant(32, 1, 2.5))}};
    const NormStats s = compute_norm_stats<double>(samples);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.5);
    EXPECT_EQ(s.stddev[0], kStdFloor);
    auto layers = samples[0];
    apply_norm_stats<double>(layers, s);
    EXPECT_EQ(layers[0].data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NormStats, DuplicatedSetMatchesSingle) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(1.0, 2.0);
    nn::Tensor<double> t({1, 3, 4, 4});
    for (auto& v : t.data.reshaped()) v = n(rng);
    const std::vector<std::vector<nn::Tensor<double>>> one{{t}};
    const std::vector<std::vector<nn::Tensor<double>>> dup{{t}, {t}, {t}};
    const NormStats a = compute_norm_stats<double>(one);
    const NormStats b = compute_norm_stats<double>(dup);
    EXPECT_NEAR(a.mean[0], b.mean[0], 1e-14);
    EXPECT_NEAR(a.stddev[0], b.stddev[0], 1e-14);
}

TEST(Translator, ZeroWeightsGiveUniformHeads) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 8);
    for (auto& p : net.params()) {
        p.weight.setZero();
        p.bias.setZero();
    }
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd cols(145, 5);
    for (auto& v : cols.reshaped()) v = n(rng);
    const auto probs = net.translate(cols);
    ASSERT_EQ(probs.size(), 9u);
    for (const auto& p : probs) EXPECT_LT((p.array() - 1.0 / 32.0).abs().maxCoeff(), 1e-15);
}

TEST(Translator, SimplexOutputsAndDeterministic) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 10);
    std::mt19937_64 rng(11);
    for (std::size_t i = net.extractor_layers(); i < net.params().size(); ++i)
        for (auto& v : net.params()[i].weight.reshaped()) v = std::normal_distribution<double>(0.0, 0.3)(rng);
    Eigen::MatrixXd cols(145, 7);
    for (auto& v : cols.reshaped()) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    const auto a = net.translate(cols);
    const auto b = net.translate(cols);
    for (std::size_t h = 0; h < a.size(); ++h) {
        EXPECT_EQ(a[h], b[h]);
        EXPECT_LT((a[h].colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    }
    EXPECT_THROW(net.translate(Eigen::MatrixXd::Zero(144, 2)), InvalidInput);
}

TEST(Tiles, CoverImageWithoutOverlap) {
    const auto tiles = make_tiles(40, 24, 16);
    ASSERT_EQ(tiles.size(), 6u);
    LabelPlane hits = LabelPlane::Zero(24, 40);
    for (const auto& t : tiles) {
        EXPECT_EQ(t.width % 4, 0);
        hits.block(t.y0, t.x0, t.height, t.width) += 1;
    }
    EXPECT_EQ(hits.minCoeff(), 1);
    EXPECT_EQ(hits.maxCoeff(), 1);
    EXPECT_THROW(make_tiles(42, 24, 16), InvalidInput);
    EXPECT_THROW(make_tiles(40, 24, 10), InvalidInput);
}

TEST(Targets, ZeroPowerPixelsExcluded) {
    CovarianceImage img(2, 1);
    img.at(0, 0) = CovarianceMatrix::Identity();
    const auto t = encode_targets(img, uniform_quantizers(), nullptr);
    std::vector<int> valid;
    const auto t2 = encode_targets(img, uniform_quantizers(), &valid);
    EXPECT_EQ(valid, std::vector<int>{0});
    EXPECT_EQ(t2.col(1), Eigen::VectorXi::Zero(9));
    EXPECT_EQ(t.col(0)(0), encode(1.0 / 3.0, uniform_quantizers()[0]));
    EXPECT_EQ(t.col(0)(3), encode(0.0, uniform_quantizers()[3]));
}

TEST(Finalize, DeltaAndRhoClamping) {
    ParamVector v;
    v << 0.6, -0.2, 0.6, 0.9, 0.9, 0.0, 0.0, 0.0, 0.0;
    int flags = 0;
    const PolFeature f = finalize_feature(v, flags);
    EXPECT_NEAR(f.delta[0], 0.5, 1e-15);
    EXPECT_EQ(f.delta[1], 0.0);
    EXPECT_NEAR(std::abs(f.rho13()), 1.0, 1e-15);
    EXPECT_TRUE(flags & kRhoClamped);
    EXPECT_FALSE(flags & kDeltaFallback);

    v << 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0, 0.1, 0.0;
    flags = 0;
    const PolFeature g = finalize_feature(v, flags);
    EXPECT_EQ(g.delta, Eigen::Vector3d::Constant(1.0 / 3.0));
    EXPECT_EQ(flags, kDeltaFallback);
}

TEST(Finalize, AlwaysPsd) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int trial = 0; trial < 5000; ++trial) {
        ParamVector v;
        for (auto& x : v) x = u(rng);
        int flags = 0;
        const PolFeature f = finalize_feature(v, flags);
        EXPECT_TRUE(psd_check(f).satisfied);
        EXPECT_NEAR(f.delta.sum(), 1.0, 1e-12);
        EXPECT_GE(oracle::min_eigenvalue(reconstruct(f, 1.0)), -kBartlettNegativeTolerance);
    }
}

TEST(ChannelCovariance, ExactInputChannelAndFallback) {
    PolFeature f;
    f.delta = Eigen::Vector3d(0.3, 0.1, 0.6);
    f.rho13() = Complex(0.3, 0.2);
    int flags = 0;
    const double intensity = 0.123456789;
    const CovarianceMatrix c = covariance_from_channel(f, intensity, Channel::VV, flags);
    EXPECT_EQ(c(2, 2).real(), intensity);
    EXPECT_NEAR(c.trace().real(), intensity / 0.6, 1e-15);
    EXPECT_EQ(flags, 0);

    f.delta = Eigen::Vector3d(0.5, 0.5, 0.0);
    const CovarianceMatrix d = covariance_from_channel(f, 2.0, Channel::VV, flags);
    EXPECT_EQ(flags, kPowerFallback);
    EXPECT_NEAR(d.trace().real(), 2.0, 1e-15);
}

TEST(Train, InitialLossDeterminismAndResume) {
    const std::vector<TrainingScene> data{make_scene(32, 21)};
    const TrainResult a = train(data, kSmallExtractor, kSmallTranslator, small_config(3));
    ASSERT_FALSE(a.step_losses.empty());
    EXPECT_NEAR(a.step_losses.front(), std::log(32.0) / 32.0, 1e-6);
    for (double l : a.step_losses) EXPECT_TRUE(std::isfinite(l));
    EXPECT_EQ(a.checkpoint.epochs_completed, 3);
    EXPECT_EQ(a.epoch_losses.size(), 3u);
    EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());

    const TrainResult b = train(data, kSmallExtractor, kSmallTranslator, small_config(3));
    EXPECT_EQ(a.step_losses, b.step_losses);

    const TrainResult first = train(data, kSmallExtractor, kSmallTranslator, small_config(1));
    const ModelCheckpoint reloaded = decode_checkpoint(encode_checkpoint(first.checkpoint));
    const TrainResult rest = resume_training(data, reloaded, 3);
    std::vector<double> joined = first.step_losses;
    joined.insert(joined.end(), rest.step_losses.begin(), rest.step_losses.end());
    EXPECT_EQ(joined, a.step_losses);
    ASSERT_EQ(rest.checkpoint.params.size(), a.checkpoint.params.size());
    for (std::size_t i = 0; i < a.checkpoint.params.size(); ++i) {
        EXPECT_EQ(rest.checkpoint.params[i].weight, a.checkpoint.params[i].weight);
        EXPECT_EQ(rest.checkpoint.params[i].bias, a.checkpoint.params[i].bias);
    }
    EXPECT_EQ(rest.checkpoint.adam.step_count, a.checkpoint.adam.step_count);
}

TEST(Train, DoublePrecisionInitialLoss) {
    const std::vector<TrainingScene> data{make_scene(16, 22)};
    TrainConfig c = small_config(1);
    c.precision = Precision::Double;
    const TrainResult r = train(data, kSmallExtractor, kSmallTranslator, c);
    EXPECT_NEAR(r.step_losses.front(), std::log(32.0) / 32.0, 1e-12);
}

TEST(Train, RejectsEmptyOrMismatchedData) {
    EXPECT_THROW(train({}, kSmallExtractor, kSmallTranslator, small_config(1)), InvalidInput);
    TrainingScene bad = make_scene(16, 23);
    bad.intensity = Plane::Zero(8, 8);
    const std::vector<TrainingScene> data{bad};
    EXPECT_THROW(train(data, kSmallExtractor, kSmallTranslator, small_config(1)), InvalidInput);
}

class ColorizeTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        data_ = new std::vector<TrainingScene>{make_scene(12, 31)};
        TrainConfig c = small_config(250);
        c.patch = 12;
        c.batch_pixels = 36;
        result_ = new TrainResult(train(*data_, kSmallExtractor, kSmallTranslator, c));
    }
    static void TearDownTestSuite() {
        delete data_;
        delete result_;
    }
    static std::vector<TrainingScene>* data_;
    static TrainResult* result_;
};

std::vector<TrainingScene>* ColorizeTest::data_ = nullptr;
TrainResult* ColorizeTest::result_ = nullptr;

TEST_F(ColorizeTest, MemorizedSceneIsClose) {
    const auto& scene = (*data_)[0];
    const ColorizeResult r = colorize(scene.intensity, result_->checkpoint);
    std::vector<double> d;
    for (std::size_t i = 0; i < r.covariance.pixels.size(); ++i)
        d.push_back(bartlett(r.covariance.pixels[i], scene.truth.pixels[i]));
    EXPECT_LT(median(d), 0.5);
}

TEST_F(ColorizeTest, PsdAndExactInputChannel) {
    const auto& scene = (*data_)[0];
    for (DecodeRule rule : {DecodeRule::Mode, DecodeRule::Mean}) {
        const ColorizeResult r = colorize(scene.intensity, result_->checkpoint, {Channel::VV, rule});
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                const CovarianceMatrix& c = r.covariance.at(y, x);
                EXPECT_TRUE(psd_check(normalize(c).feature).satisfied);
                EXPECT_GE(oracle::min_eigenvalue(c), -1e-9 * c.trace().real());
                if (!(r.flags(y, x) & kPowerFallback)) EXPECT_EQ(c(2, 2).real(), scene.intensity(y, x));
            }
    }
}

TEST_F(ColorizeTest, ConstantImageGivesConstantOutput) {
    const Plane flat = Plane::Constant(16, 24, 0.05);
    const ColorizeResult r = colorize(flat, result_->checkpoint);
    for (const auto& c : r.covariance.pixels) EXPECT_LT((c - r.covariance.pixels[0]).norm(), 1e-12);
}

TEST_F(ColorizeTest, CheckpointRoundtripIsBitIdentical) {
    const auto& scene = (*data_)[0];
    const ColorizeResult before = colorize(scene.intensity, result_->checkpoint);
    const ModelCheckpoint loaded = decode_checkpoint(encode_checkpoint(result_->checkpoint));
    const ColorizeResult after = colorize(scene.intensity, loaded);
    EXPECT_EQ(before.covariance.pixels, after.covariance.pixels);
    EXPECT_TRUE((before.flags == after.flags).all());
}

TEST_F(ColorizeTest, RejectsBadInput) {
    EXPECT_THROW(colorize(Plane::Constant(10, 12, 0.1), result_->checkpoint), InvalidInput);
    Plane neg = Plane::Constant(12, 12, 0.1);
    neg(3, 3) = -1.0;
    EXPECT_THROW(colorize(neg, result_->checkpoint), InvalidInput);
}
