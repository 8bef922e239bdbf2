#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "polcolor/errors.hpp"
#include "polcolor/quantizer.hpp"

using namespace polcolor;

namespace {

std::vector<double> uniform_samples(std::size_t n, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> s(n);
    for (auto& v : s) v = u(rng);
    return s;
}

QuantizerTable two_bin_table() {
    QuantizerTable t;
    t.k = 2;
    t.edges = Eigen::Vector3d(0.0, 0.5, 1.0);
    t.centers = Eigen::Vector2d(0.2, 0.8);
    return t;
}

}  // namespace

TEST(Fit, UniformSampleEdgesNearUniformGrid) {
    const auto s = uniform_samples(32000, 0.0, 1.0, 1);
    const auto t = fit_quantizer(s, 32, 0.0, 1.0);
    ASSERT_EQ(t.edges.size(), 33);
    EXPECT_FALSE(t.uniform_fallback);
    EXPECT_EQ(t.edges[0], 0.0);
    EXPECT_EQ(t.edges[32], 1.0);
    for (int i = 0; i <= 32; ++i) EXPECT_NEAR(t.edges[i], i / 32.0, 0.01);
}

TEST(Fit, EdgesAndCentersOrdered) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.1, 0.3);
    std::vector<double> s(5000);
    for (auto& v : s) v = n(rng);
    const auto t = fit_quantizer(s, 32, -1.0, 1.0);
    for (int i = 0; i < 32; ++i) {
        EXPECT_LT(t.edges[i], t.edges[i + 1]);
        EXPECT_LT(t.edges[i], t.centers[i]);
        EXPECT_LT(t.centers[i], t.edges[i + 1]);
    }
    EXPECT_EQ(t.edges[0], -1.0);
    EXPECT_EQ(t.edges[32], 1.0);
}

TEST(Fit, EqualizedBinCounts) {
    const auto s = uniform_samples(10007, 0.0, 1.0, 3);
    const auto t = fit_quantizer(s, 32, 0.0, 1.0);
    std::vector<int> counts(32, 0);
    for (double v : s) ++counts[encode(v, t)];
    const double expected = 10007.0 / 32.0;
    for (int c : counts) EXPECT_LE(std::abs(c - expected), 1.0);
}

TEST(Fit, IdenticalSamplesFallBackToUniform) {
    const std::vector<double> s(1000, 0.25);
    const auto t = fit_quantizer(s, 32, 0.0, 1.0);
    EXPECT_TRUE(t.uniform_fallback);
    EXPECT_EQ(t, [] {
        auto u = uniform_quantizer(32, 0.0, 1.0);
        u.uniform_fallback = true;
        return u;
    }());
}

TEST(Fit, TooFewDistinctFallsBack) {
    std::vector<double> s;
    for (int i = 0; i < 31; ++i) s.insert(s.end(), 10, i / 31.0);
    EXPECT_TRUE(fit_quantizer(s, 32, 0.0, 1.0).uniform_fallback);
    s.push_back(0.999);
    EXPECT_FALSE(fit_quantizer(s, 32, 0.0, 1.0).uniform_fallback);
}

TEST(Fit, OrderIndependent) {
    auto s = uniform_samples(3000, -1.0, 1.0, 4);
    const auto a = fit_quantizer(s, 32, -1.0, 1.0);
    std::shuffle(s.begin(), s.end(), std::mt19937_64(9));
    EXPECT_EQ(fit_quantizer(s, 32, -1.0, 1.0), a);
}

TEST(Fit, RejectsBadBinCount) {
    const auto s = uniform_samples(100, 0.0, 1.0, 5);
    EXPECT_THROW(fit_quantizer(s, 1, 0.0, 1.0), InvalidInput);
}

TEST(Fit, DefaultBinCount) { EXPECT_EQ(kDefaultBins, 32); }

TEST(Encode, CentersMapToOwnBin) {
    const auto t = fit_quantizer(uniform_samples(4000, 0.0, 1.0, 6), 32, 0.0, 1.0);
    for (int j = 0; j < 32; ++j) EXPECT_EQ(encode(t.centers[j], t), j);
}

TEST(Encode, ClampingAndEndpoints) {
    const auto t = uniform_quantizer(32, -1.0, 1.0);
    EXPECT_EQ(encode(-5.0, t), 0);
    EXPECT_EQ(encode(-1.0, t), 0);
    EXPECT_EQ(encode(1.0, t), 31);
    EXPECT_EQ(encode(7.0, t), 31);
    EXPECT_EQ(encode(t.edges[5], t), 5);
}

TEST(Encode, Monotone) {
    const auto t = fit_quantizer(uniform_samples(4000, 0.0, 1.0, 7), 32, 0.0, 1.0);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    for (int i = 0; i < 10000; ++i) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        EXPECT_LE(encode(a, t), encode(b, t));
    }
}

TEST(Decode, TwoBinExample) {
    const auto t = two_bin_table();
    const std::vector<double> p{0.6, 0.4};
    EXPECT_DOUBLE_EQ(decode(p, t, DecodeRule::Mode), 0.2);
    EXPECT_NEAR(decode(p, t, DecodeRule::Mean), 0.44, 1e-15);
}

TEST(Decode, OneHotGivesCenterUnderBothRules) {
    const auto t = fit_quantizer(uniform_samples(4000, -1.0, 1.0, 10), 32, -1.0, 1.0);
    for (int j = 0; j < 32; ++j) {
        std::vector<double> p(32, 0.0);
        p[j] = 1.0;
        EXPECT_EQ(decode(p, t, DecodeRule::Mode), t.centers[j]);
        EXPECT_DOUBLE_EQ(decode(p, t, DecodeRule::Mean), t.centers[j]);
    }
}

TEST(Decode, UniformOnSymmetricTableMeanIsZero) {
    const auto t = uniform_quantizer(32, -1.0, 1.0);
    const std::vector<double> p(32, 1.0 / 32.0);
    EXPECT_NEAR(decode(p, t, DecodeRule::Mean), 0.0, 1e-15);
}

TEST(Decode, TieGoesToLowestIndex) {
    const auto t = two_bin_table();
    const std::vector<double> p{0.5, 0.5};
    EXPECT_DOUBLE_EQ(decode(p, t, DecodeRule::Mode), 0.2);
}

TEST(Decode, InvalidDistributions) {
    const auto t = two_bin_table();
    const auto expect_invalid = [&](std::vector<double> p) {
        try {
            decode(p, t);
            FAIL() << "expected error";
        } catch (const InvalidInput& e) {
            EXPECT_STREQ(e.what(), "invalid distribution");
        }
    };
    expect_invalid({0.7, 0.4});
    expect_invalid({1.2, -0.2});
    expect_invalid({1.0});
    expect_invalid({std::nan(""), 1.0});
    EXPECT_NO_THROW(decode(std::vector<double>{0.5, 0.5 + 5e-7}, t));
}

TEST(Roundtrip, WithinContainingBinWidth) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 0.4);
    std::vector<double> s(6000);
    for (auto& v : s) v = n(rng);
    const auto t = fit_quantizer(s, 32, -1.0, 1.0);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 10000; ++i) {
        const double v = u(rng);
        const int b = encode(v, t);
        std::vector<double> p(32, 0.0);
        p[b] = 1.0;
        EXPECT_LE(std::abs(decode(p, t) - std::clamp(v, -1.0, 1.0)), t.bin_width(b));
    }
}

TEST(Roundtrip, MaeBoundedByMaxHalfWidth) {
    for (std::uint64_t seed : {13u, 14u, 15u}) {
        std::mt19937_64 rng(seed);
        std::gamma_distribution<double> g(2.0, 0.1);
        std::vector<double> s(8000);
        for (auto& v : s) v = std::min(g(rng), 1.0);
        const auto t = fit_quantizer(s, 32, 0.0, 1.0);
        double mae = 0.0;
        for (double v : s) mae += std::abs(t.centers[encode(v, t)] - v);
        mae /= static_cast<double>(s.size());
        EXPECT_LE(mae, t.max_half_width());
    }
}

TEST(QuantizerSet, RangesAndNames) {
    for (int p = 0; p < 3; ++p) EXPECT_EQ(param_range(p), std::make_pair(0.0, 1.0));
    for (int p = 3; p < kNumParams; ++p) EXPECT_EQ(param_range(p), std::make_pair(-1.0, 1.0));
    const auto set = uniform_quantizers();
    for (int p = 0; p < kNumParams; ++p) {
        EXPECT_EQ(set[p].param_id, p);
        EXPECT_EQ(set[p].lo, param_range(p).first);
        EXPECT_FALSE(param_name(p).empty());
    }
}
