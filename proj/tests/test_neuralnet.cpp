#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "polcolor/errors.hpp"
#include "polcolor/nn/adam.hpp"
#include "polcolor/nn/gradcheck.hpp"
#include "polcolor/nn/layers.hpp"
#include "polcolor/nn/loss.hpp"
#include "polcolor/nn/sequential.hpp"
#include "polcolor/pipeline.hpp"

using namespace polcolor;
using namespace polcolor::nn;

namespace {

Tensor<double> random_tensor(const Shape& s, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<double> t(s);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = n(rng);
    return t;
}

void randomize(NetParams<double>& params, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    for (auto& p : params) {
        for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = n(rng);
        for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = n(rng);
    }
}

TargetMatrix random_targets(int heads, int pixels, int bins, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, bins - 1);
    TargetMatrix t(heads, pixels);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    return t;
}

// Checks one layer's parameter and input gradients of the scalar w . layer(x).
void check_layer(const LayerSpec& spec, const Shape& in, std::uint64_t seed, double tol) {
    std::mt19937_64 rng(seed);
    NetParams<double> params{init_layer<double>(spec, rng)};
    if (spec.has_params()) randomize(params, rng, 0.5);
    Tensor<double> x = random_tensor(in, rng);
    const Tensor<double> probe = random_tensor(layer_forward<double>(spec, params[0], x).output.shape, rng);
    const auto objective = [&] {
        return layer_forward<double>(spec, params[0], x).output.data.cwiseProduct(probe.data).sum();
    };
    auto fwd = layer_forward<double>(spec, params[0], x);
    const auto back = layer_backward<double>(spec, params[0], fwd.cache, probe);
    if (spec.has_params()) {
        const NetParams<double> analytic{back.grad_params};
        const auto r = finite_difference_check(params, analytic, objective);
        EXPECT_TRUE(r.finite);
        EXPECT_GE(r.checked, std::min<std::size_t>(100, static_cast<std::size_t>(params[0].size())));
        EXPECT_LE(r.max_relative_error, tol) << to_string(spec.kind);
    }
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.data.size(); ++i) {
        double& v = x.data.data()[i];
        const double saved = v;
        v = saved + h;
        const double up = objective();
        v = saved - h;
        const double down = objective();
        v = saved;
        worst = std::max(worst, relative_error(back.grad_input.data.data()[i], (up - down) / (2 * h)));
    }
    EXPECT_LE(worst, tol) << to_string(spec.kind) << " input gradient";
}

ColorizationNet<double> toy_net(std::uint64_t seed) {
    ExtractorConfig e{{8, 8, 8, 8, 8, 8, 8}};
    TranslatorConfig t{{16, 12}, 8, kNumParams, 32};
    ColorizationNet<double> net(e, t, seed);
    std::mt19937_64 rng(seed + 100);
    for (std::size_t i = net.extractor_layers(); i < net.params().size(); ++i) {
        auto& p = net.params()[i];
        if (p.weight.size() == 0) continue;
        std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(p.weight.cols())));
        for (Eigen::Index k = 0; k < p.weight.size(); ++k) p.weight.data()[k] = n(rng);
        for (Eigen::Index k = 0; k < p.bias.size(); ++k) p.bias.data()[k] = 0.1 * n(rng);
    }
    return net;
}

}  // namespace

TEST(Relu, Forward) {
    const LayerSpec spec = LayerSpec::relu();
    Tensor<double> x({1, 3, 1, 1}, Eigen::Vector3d(-1.0, 0.0, 2.0));
    const auto r = layer_forward<double>(spec, {}, x);
    EXPECT_EQ(r.output.data, Eigen::MatrixXd(Eigen::Vector3d(0.0, 0.0, 2.0)));
}

TEST(Relu, BackwardMasksNonPositiveInputs) {
    const LayerSpec spec = LayerSpec::relu();
    Tensor<double> x({1, 3, 1, 1}, Eigen::Vector3d(-1.0, 0.0, 2.0));
    auto r = layer_forward<double>(spec, {}, x);
    Tensor<double> g({1, 3, 1, 1}, Eigen::Vector3d(5.0, 6.0, 7.0));
    const auto b = layer_backward<double>(spec, {}, r.cache, g);
    EXPECT_EQ(b.grad_input.data, Eigen::MatrixXd(Eigen::Vector3d(0.0, 0.0, 7.0)));
}

TEST(Conv, IdentityKernelReproducesImage) {
    std::mt19937_64 rng(1);
    const LayerSpec spec = LayerSpec::conv3x3(1, 1);
    LayerParams<double> p;
    p.weight = Eigen::MatrixXd::Zero(1, 9);
    p.weight(0, 4) = 1.0;
    p.bias = Eigen::VectorXd::Zero(1);
    const auto x = random_tensor({2, 1, 6, 5}, rng);
    EXPECT_EQ(layer_forward<double>(spec, p, x).output.data, x.data);
}

TEST(Conv, MatchesNaiveOracle) {
    std::mt19937_64 rng(2);
    const LayerSpec spec = LayerSpec::conv3x3(3, 4);
    auto p = init_layer<double>(spec, rng);
    p.bias = Eigen::Vector4d(0.1, -0.2, 0.3, 0.0);
    const auto x = random_tensor({2, 3, 5, 7}, rng);
    const auto y = layer_forward<double>(spec, p, x).output;
    ASSERT_EQ(y.shape, (Shape{2, 4, 5, 7}));
    for (int b = 0; b < 2; ++b) {
        const std::vector<double> item(x.data.col(b).data(), x.data.col(b).data() + x.data.rows());
        const auto expected = oracle::conv3x3(item, 3, 5, 7, p.weight, p.bias);
        for (std::size_t i = 0; i < expected.size(); ++i)
            EXPECT_NEAR(y.data(static_cast<Eigen::Index>(i), b), expected[i], 1e-12);
    }
}

TEST(Conv, ShapeMismatchNamesShapes) {
    std::mt19937_64 rng(3);
    const LayerSpec spec = LayerSpec::conv3x3(2, 4);
    const auto p = init_layer<double>(spec, rng);
    try {
        layer_forward<double>(spec, p, Tensor<double>({1, 3, 4, 4}));
        FAIL() << "expected error";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("(1, 3, 4, 4)"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("channels = 2"), std::string::npos);
    }
}

TEST(MaxPool, Example) {
    Tensor<double> x({1, 1, 2, 2});
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 0, 1) = 2;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 0, 1, 1) = 4;
    const auto r = layer_forward<double>(LayerSpec::maxpool2x2(), {}, x);
    ASSERT_EQ(r.output.shape, (Shape{1, 1, 1, 1}));
    EXPECT_EQ(r.output.data(0, 0), 4.0);
}

TEST(MaxPool, TiesRouteGradientToFirstOccurrence) {
    Tensor<double> x({1, 1, 2, 2}, Eigen::Vector4d::Constant(1.0));
    auto r = layer_forward<double>(LayerSpec::maxpool2x2(), {}, x);
    Tensor<double> g({1, 1, 1, 1}, Eigen::MatrixXd::Constant(1, 1, 3.0));
    const auto b = layer_backward<double>(LayerSpec::maxpool2x2(), {}, r.cache, g);
    EXPECT_EQ(b.grad_input.data, Eigen::MatrixXd(Eigen::Vector4d(3.0, 0.0, 0.0, 0.0)));
}

TEST(MaxPool, OddDimsRejected) {
    EXPECT_THROW(layer_forward<double>(LayerSpec::maxpool2x2(), {}, Tensor<double>({1, 1, 3, 4})), InvalidInput);
}

TEST(FullyConnected, AffineMap) {
    const LayerSpec spec = LayerSpec::fully_connected(2, 2);
    LayerParams<double> p;
    p.weight = (Eigen::Matrix2d() << 1, 2, 3, 4).finished();
    p.bias = Eigen::Vector2d(0.5, -0.5);
    Tensor<double> x({1, 2, 1, 1}, Eigen::Vector2d(1.0, -1.0));
    EXPECT_EQ(layer_forward<double>(spec, p, x).output.data, Eigen::MatrixXd(Eigen::Vector2d(-0.5, -1.5)));
}

TEST(Upsample, ConstantStaysConstant) {
    Tensor<double> x({1, 2, 3, 4}, Eigen::MatrixXd::Constant(24, 1, 0.7));
    const auto y = bilinear_upsample<double>(x, 11, 13);
    EXPECT_LT((y.data.array() - 0.7).abs().maxCoeff(), 1e-15);
}

TEST(Upsample, MiddleColumnIsHalf) {
    Tensor<double> x({1, 1, 2, 2}, Eigen::Vector4d(0.0, 1.0, 0.0, 1.0));
    const auto y = bilinear_upsample<double>(x, 2, 3);
    for (int r = 0; r < 2; ++r) {
        EXPECT_DOUBLE_EQ(y.at(0, 0, r, 0), 0.0);
        EXPECT_DOUBLE_EQ(y.at(0, 0, r, 1), 0.5);
        EXPECT_DOUBLE_EQ(y.at(0, 0, r, 2), 1.0);
    }
}

TEST(Upsample, IdentityAtSameSize) {
    std::mt19937_64 rng(4);
    const auto x = random_tensor({1, 2, 4, 4}, rng);
    EXPECT_EQ(bilinear_upsample<double>(x, 4, 4).data, x.data);
}

TEST(Upsample, MatchesBilinearOracle) {
    std::mt19937_64 rng(5);
    const auto x = random_tensor({1, 1, 4, 5}, rng);
    const auto y = bilinear_upsample<double>(x, 16, 17);
    const std::vector<double> src(x.data.data(), x.data.data() + x.data.size());
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 17; ++c) EXPECT_NEAR(y.at(0, 0, r, c), oracle::bilinear(src, 4, 5, 16, 17, r, c), 1e-12);
}

TEST(Upsample, BackwardIsAdjoint) {
    std::mt19937_64 rng(6);
    const auto x = random_tensor({2, 3, 4, 4}, rng);
    const auto g = random_tensor({2, 3, 16, 16}, rng);
    const double lhs = bilinear_upsample<double>(x, 16, 16).data.cwiseProduct(g.data).sum();
    const double rhs = x.data.cwiseProduct(bilinear_upsample_backward<double>(g, x.shape).data).sum();
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Upsample, ShrinkingRejected) {
    EXPECT_THROW(bilinear_upsample<double>(Tensor<double>({1, 1, 4, 4}), 2, 4), InvalidInput);
}

TEST(Softmax, Examples) {
    const Eigen::VectorXd flat = softmax_head<double>(Eigen::VectorXd::Constant(32, 2.5));
    for (int i = 0; i < 32; ++i) EXPECT_NEAR(flat[i], 1.0 / 32.0, 1e-15);
    const Eigen::VectorXd p = softmax_head<double>(Eigen::Vector2d(0.0, std::log(3.0)));
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, SimplexForRandomAndExtremeLogits) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 50.0);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::VectorXd z(32);
        for (auto& v : z) v = n(rng);
        if (trial % 10 == 0) z[3] = 1e300;
        const Eigen::VectorXd p = softmax_head<double>(z);
        EXPECT_GE(p.minCoeff(), 0.0);
        EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    }
}

TEST(CrossEntropy, UniformPredictions) {
    for (int batch : {1, 7}) {
        std::vector<Eigen::MatrixXd> probs(9, Eigen::MatrixXd::Constant(32, batch, 1.0 / 32.0));
        std::mt19937_64 rng(8);
        const auto t = random_targets(9, batch, 32, rng);
        EXPECT_NEAR(cross_entropy<double>(probs, t), std::log(32.0) / 32.0, 1e-12);
    }
    EXPECT_NEAR(std::log(32.0) / 32.0, 0.10831, 1e-5);
}

TEST(CrossEntropy, ConfidentPredictionsApproachZero) {
    std::vector<Eigen::MatrixXd> probs(9, Eigen::MatrixXd::Constant(32, 1, 1e-12));
    TargetMatrix t = TargetMatrix::Constant(9, 1, 5);
    for (auto& p : probs) p(5, 0) = 1.0 - 31e-12;
    const double l = cross_entropy<double>(probs, t);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1e-12);
}

TEST(CrossEntropy, NonNegativeAndRangeChecked) {
    std::mt19937_64 rng(9);
    std::vector<Eigen::MatrixXd> logits(9);
    for (auto& z : logits) z = random_tensor({4, 32, 1, 1}, rng).data;
    std::vector<Eigen::MatrixXd> probs;
    for (auto& z : logits) probs.push_back(softmax_columns<double>(z));
    EXPECT_GE(cross_entropy<double>(probs, random_targets(9, 4, 32, rng)), 0.0);
    TargetMatrix bad = TargetMatrix::Zero(9, 4);
    bad(2, 1) = 32;
    EXPECT_THROW(cross_entropy<double>(probs, bad), InvalidInput);
    bad(2, 1) = -1;
    EXPECT_THROW(cross_entropy<double>(probs, bad), InvalidInput);
}

TEST(CrossEntropy, FusedGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(10);
    std::vector<Eigen::MatrixXd> logits(9);
    for (auto& z : logits) z = random_tensor({3, 32, 1, 1}, rng).data;
    const auto t = random_targets(9, 3, 32, rng);
    const auto sl = softmax_cross_entropy<double>(logits, t);
    const double h = 1e-5;
    double worst = 0.0;
    for (int head : {0, 4, 8})
        for (Eigen::Index i = 0; i < logits[0].size(); i += 7) {
            double& v = logits[static_cast<std::size_t>(head)].data()[i];
            const double saved = v;
            v = saved + h;
            const double up = softmax_cross_entropy<double>(logits, t).loss;
            v = saved - h;
            const double down = softmax_cross_entropy<double>(logits, t).loss;
            v = saved;
            worst = std::max(worst, relative_error(sl.grad_logits[static_cast<std::size_t>(head)].data()[i],
                                                   (up - down) / (2 * h)));
        }
    EXPECT_LE(worst, 1e-6);
}

TEST(Adam, Defaults) {
    const AdamConfig c;
    EXPECT_EQ(c.learning_rate, 1e-4);
    EXPECT_EQ(c.beta1, 0.9);
    EXPECT_EQ(c.beta2, 0.999);
    EXPECT_EQ(c.epsilon, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    std::mt19937_64 rng(11);
    NetParams<double> params{init_layer<double>(LayerSpec::fully_connected(4, 3), rng)};
    const auto before = params[0].weight;
    NetParams<double> grads{LayerParams<double>::zeros_like(params[0])};
    auto state = AdamState<double>::zeros_like(params);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
    EXPECT_EQ(params[0].weight, before);
    EXPECT_EQ(state.step_count, 5u);
    EXPECT_EQ(params[0].version, 5u);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
    NetParams<double> params{LayerParams<double>{Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), 0}};
    NetParams<double> grads{LayerParams<double>{Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Constant(1, -2.0), 0}};
    auto state = AdamState<double>::zeros_like(params);
    double prev_w = 0.0, prev_b = 0.0;
    for (int i = 0; i < 2000; ++i) {
        adam_step(params, grads, state);
        const double dw = params[0].weight(0, 0) - prev_w;
        const double db = params[0].bias[0] - prev_b;
        EXPECT_NEAR(dw, -1e-4, 1e-9);
        EXPECT_NEAR(db, 1e-4, 1e-9);
        prev_w = params[0].weight(0, 0);
        prev_b = params[0].bias[0];
    }
    EXPECT_EQ(state.step_count, 2000u);
}

TEST(Adam, ShapeMismatchRejected) {
    std::mt19937_64 rng(12);
    NetParams<double> params{init_layer<double>(LayerSpec::fully_connected(4, 3), rng)};
    NetParams<double> grads{init_layer<double>(LayerSpec::fully_connected(3, 3), rng)};
    auto state = AdamState<double>::zeros_like(params);
    EXPECT_THROW(adam_step(params, grads, state), InvalidInput);
}

TEST(Cache, StaleAfterUpdateIsRejected) {
    std::mt19937_64 rng(13);
    const LayerSpec spec = LayerSpec::fully_connected(4, 3);
    NetParams<double> params{init_layer<double>(spec, rng)};
    const auto x = random_tensor({2, 4, 1, 1}, rng);
    auto fwd = layer_forward<double>(spec, params[0], x);
    NetParams<double> grads{LayerParams<double>::zeros_like(params[0])};
    auto state = AdamState<double>::zeros_like(params);
    adam_step(params, grads, state);
    EXPECT_THROW(layer_backward<double>(spec, params[0], fwd.cache, fwd.output), InvalidInput);
    EXPECT_THROW(layer_backward<double>(LayerSpec::relu(), {}, LayerCache<double>{}, fwd.output), InvalidInput);
}

TEST(GradCheck, ConvOneChannelFiveByFive) { check_layer(LayerSpec::conv3x3(1, 2), {1, 1, 5, 5}, 20, 1e-6); }
TEST(GradCheck, ConvMultiChannel) { check_layer(LayerSpec::conv3x3(3, 4), {2, 3, 6, 4}, 21, 1e-6); }
TEST(GradCheck, FullyConnected) { check_layer(LayerSpec::fully_connected(20, 12), {5, 20, 1, 1}, 22, 1e-6); }
TEST(GradCheck, Relu) { check_layer(LayerSpec::relu(), {2, 3, 4, 4}, 23, 1e-6); }
TEST(GradCheck, MaxPool) { check_layer(LayerSpec::maxpool2x2(), {2, 2, 4, 6}, 24, 1e-6); }
TEST(GradCheck, SoftmaxHead) { check_layer(LayerSpec::softmax_head(), {3, 32, 1, 1}, 25, 1e-6); }

TEST(GradCheck, TranslatorOnly) {
    auto net = toy_net(30);
    std::mt19937_64 rng(31);
    const int length = net.extractor_config().hypercolumn_length();
    const Eigen::MatrixXd columns = random_tensor({20, length, 1, 1}, rng).data;
    const auto targets = random_targets(kNumParams, 20, 32, rng);
    NetParams<double> grads;
    net.translator_loss_and_gradient(columns, targets, grads);
    const auto r = finite_difference_check(net.params(), grads, [&] { return net.translator_loss(columns, targets); });
    EXPECT_TRUE(r.finite);
    EXPECT_GE(r.checked, 100u);
    EXPECT_LE(r.max_relative_error, 1e-6);
}

TEST(GradCheck, EndToEndToyScale) {
    auto net = toy_net(40);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<double> patch({1, 1, 16, 16});
    for (auto& v : patch.data.reshaped()) v = u(rng);
    const std::vector<Tensor<double>> patches{patch};
    net.set_norm_stats(fit_norm_stats<double>(patches, net));
    std::vector<int> pixels;
    for (int i = 0; i < 256; i += 5) pixels.push_back(i);
    const auto targets = random_targets(kNumParams, static_cast<int>(pixels.size()), 32, rng);
    NetParams<double> grads;
    net.loss_and_gradient(patch, pixels, targets, grads);
    const auto r = finite_difference_check(net.params(), grads, [&] { return net.loss(patch, pixels, targets); });
    EXPECT_TRUE(r.finite);
    EXPECT_LE(r.max_relative_error, 1e-5);
}

TEST(GradCheck, ZeroWeightNetworkIsFinite) {
    ColorizationNet<double> net(ExtractorConfig{{4, 4, 4, 4, 4, 4, 4}}, TranslatorConfig{{8, 8}, 4, kNumParams, 32}, 50);
    for (auto& p : net.params()) {
        p.weight.setZero();
        p.bias.setZero();
    }
    Tensor<double> patch({1, 1, 8, 8}, Eigen::MatrixXd::Constant(64, 1, 0.5));
    const std::vector<Tensor<double>> patches{patch};
    net.set_norm_stats(fit_norm_stats<double>(patches, net));
    const std::vector<int> pixels{0, 9, 63};
    const TargetMatrix targets = TargetMatrix::Constant(kNumParams, 3, 4);
    NetParams<double> grads;
    const double l = net.loss_and_gradient(patch, pixels, targets, grads);
    EXPECT_NEAR(l, std::log(32.0) / 32.0, 1e-12);
    for (const auto& g : grads) {
        EXPECT_TRUE(g.weight.allFinite());
        EXPECT_TRUE(g.bias.allFinite());
    }
}

TEST(Forward, DeterministicGivenSeed) {
    const ExtractorConfig e = ExtractorConfig::desk();
    const TranslatorConfig t = TranslatorConfig::desk();
    std::mt19937_64 rng(60);
    Tensor<float> patch = random_tensor({1, 1, 16, 16}, rng).cast<float>();
    ColorizationNet<float> a(e, t, 61), b(e, t, 61);
    const auto fa = a.raw_features(patch);
    const auto fb = b.raw_features(patch);
    ASSERT_EQ(fa.size(), fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i].data, fb[i].data);
}

TEST(Overfit, HundredPixelMemorization) {
    ColorizationNet<double> net(ExtractorConfig::desk(), TranslatorConfig::desk(), 70);
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<double> patch({1, 1, 16, 16});
    for (auto& v : patch.data.reshaped()) v = u(rng);
    const std::vector<Tensor<double>> patches{patch};
    net.set_norm_stats(fit_norm_stats<double>(patches, net));
    std::vector<int> pixels(100);
    for (int i = 0; i < 100; ++i) pixels[static_cast<std::size_t>(i)] = (i * 37) % 256;
    const auto targets = random_targets(kNumParams, 100, 32, rng);
    AdamConfig config;
    config.learning_rate = 1e-3;
    auto state = AdamState<double>::zeros_like(net.params(), config);
    NetParams<double> grads;
    const double initial = net.loss(patch, pixels, targets);
    double current = initial;
    int steps = 0;
    for (; steps < 2000; ++steps) {
        current = net.loss_and_gradient(patch, pixels, targets, grads);
        if (current < 0.1 * initial) break;
        adam_step(net.params(), grads, state);
    }
    EXPECT_LT(current, 0.1 * initial) << "after " << steps << " steps";
}
