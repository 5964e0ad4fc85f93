#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biasamp/gaussmodel.hpp"
#include "biasamp/metrics.hpp"

using namespace biasamp;

namespace {

LabeledDataset random_dataset(std::mt19937_64& rng, Index n, Index d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(n, d);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < d; ++j) x(i, j) = normal(rng);
        y[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 2);
    }
    return LabeledDataset(x, y);
}

}  // namespace

TEST(BiasAmplification, AlwaysPositiveModel) {
    Matrix x(4, 1);
    x << 1, 2, 3, 4;
    const LinearModel always{Vector::Zero(1), 1.0};
    const auto r = bias_amplification(always, LabeledDataset(x, {0, 1, 0, 1}));
    EXPECT_EQ(r.bias, 0.5);
    EXPECT_EQ(r.predicted_positive_rate, 1.0);
    EXPECT_EQ(r.empirical_prior, 0.5);
    EXPECT_EQ(r.accuracy, 0.5);
}

TEST(BiasAmplification, PerfectClassifier) {
    Matrix x(4, 1);
    x << -2, -1, 1, 2;
    const LinearModel m{Vector::Ones(1), 0.0};
    const auto r = bias_amplification(m, LabeledDataset(x, {0, 0, 1, 1}));
    EXPECT_EQ(r.bias, 0.0);
    EXPECT_EQ(r.accuracy, 1.0);
}

TEST(BiasAmplification, SeventyPredictedSixtyPositive) {
    // x_i = i; h predicts 1 for the first 70 rows, y = 1 for rows 10..69.
    Matrix x(100, 1);
    std::vector<int> y(100, 0);
    for (Index i = 0; i < 100; ++i) x(i, 0) = static_cast<double>(i);
    for (int i = 10; i < 70; ++i) y[static_cast<std::size_t>(i)] = 1;
    const LinearModel m{Vector::Constant(1, -1.0), 69.5};
    const auto r = bias_amplification(m, LabeledDataset(x, y));
    // enumeration oracle
    int pp = 0, pos = 0;
    for (int i = 0; i < 100; ++i) {
        pp += (69.5 - i > 0);
        pos += y[static_cast<std::size_t>(i)];
    }
    EXPECT_EQ(pp, 70);
    EXPECT_EQ(pos, 60);
    EXPECT_NEAR(r.bias, 0.10, 1e-15);
    EXPECT_NEAR(r.accuracy, 0.90, 1e-15);
}

TEST(BiasAmplification, ZeroScorePredictsNegative) {
    Matrix x(2, 1);
    x << 0, 0;
    const auto r = bias_amplification(LinearModel{Vector::Ones(1), 0.0}, LabeledDataset(x, {0, 1}));
    EXPECT_EQ(r.predicted_positive, 0);
}

TEST(BiasAmplification, DimensionMismatch) {
    Matrix x(2, 2);
    x.setZero();
    EXPECT_THROW(bias_amplification(LinearModel{Vector::Ones(3), 0.0}, LabeledDataset(x, {0, 1})), Error);
}

TEST(BiasAmplification, RangeAndIdentityProperties) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto data = random_dataset(rng, 1 + static_cast<Index>(rng() % 40), 3);
        const LinearModel m{Vector::NullaryExpr(3, [&] { return normal(rng); }), normal(rng)};
        const auto r = bias_amplification(m, data);
        EXPECT_GE(r.bias, -r.empirical_prior - 1e-15);
        EXPECT_LE(r.bias, 1.0 - r.empirical_prior + 1e-15);
        EXPECT_NEAR(r.bias, r.predicted_positive_rate - r.empirical_prior, 1e-12);
        EXPECT_GE(r.accuracy, 0.0);
        EXPECT_LE(r.accuracy, 1.0);

        // relabel y -> 1 - y and negate the score: bias negates (ties at 0 excluded)
        if ((m.scores(data.features).array() == 0.0).any()) continue;
        LabeledDataset flipped = data;
        for (int& y : flipped.labels) y = 1 - y;
        const auto f = bias_amplification(LinearModel{-m.weights, -m.bias}, flipped);
        EXPECT_NEAR(f.bias, -r.bias, 1e-12);
    }
}

TEST(MeanAndSe, HandValues) {
    const double xs[] = {1.0, 2.0, 3.0, 4.0};
    const auto e = mean_and_se(xs);
    EXPECT_DOUBLE_EQ(e.mean, 2.5);
    EXPECT_DOUBLE_EQ(e.standard_error, std::sqrt(5.0 / 3.0 / 4.0));
    const double one[] = {7.0};
    EXPECT_EQ(mean_and_se(one).standard_error, 0.0);
}

TEST(SystematicBias, BayesOptimalLearnerIsUnbiasedAtBalancedPrior) {
    const auto params = make_asymmetric_params(20, 1.0, 3.0, 0.5);
    const auto h = bayes_optimal_model(params);
    const auto sb = systematic_bias(params, 50, 40, 2000, 3, [&](const LabeledDataset&, std::uint64_t) { return h; });
    EXPECT_LE(std::abs(sb.bias.mean), 3 * sb.bias.standard_error + 1e-12);
}

TEST(SystematicBias, DeterministicAndOrderedByRun) {
    const auto params = make_asymmetric_params(30, 1.0, 10.0, 0.5);
    const auto a = systematic_bias(params, 60, 6, SgdConfig{}, 500, 21);
    const auto b = systematic_bias(params, 60, 6, SgdConfig{}, 500, 21);
    ASSERT_EQ(a.runs.size(), 6u);
    for (std::size_t r = 0; r < 6; ++r) {
        EXPECT_TRUE(a.models[r] == b.models[r]);
        EXPECT_EQ(a.runs[r].bias, b.runs[r].bias);
    }
    EXPECT_EQ(a.bias.mean, b.bias.mean);
}

TEST(SystematicBias, EvaluateOnTrainUsesTrainingSet) {
    const auto params = make_asymmetric_params(10, 1.0, 3.0, 0.5);
    const auto sb = systematic_bias(params, 40, 3, SgdConfig{}, 500, 2, true);
    for (const auto& r : sb.runs) EXPECT_EQ(r.n, 40);
}

TEST(SystematicBias, RejectsZeroRuns) {
    const auto params = make_asymmetric_params(1, 1.0, 3.0, 0.5);
    EXPECT_THROW(systematic_bias(params, 40, 0, SgdConfig{}, 500, 2), Error);
}

TEST(SystematicBias, StandardErrorShrinksWithRuns) {
    // Averaged over independent master seeds to tame the noise of a single SE estimate.
    const auto params = make_asymmetric_params(50, 1.0, 10.0, 0.5);
    const auto h = bayes_optimal_model(params);
    auto learner = [&](const LabeledDataset&, std::uint64_t) { return h; };
    double se20 = 0.0, se80 = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        se20 += systematic_bias(params, 10, 20, 400, 100 + s, learner).bias.standard_error;
        se80 += systematic_bias(params, 10, 80, 400, 200 + s, learner).bias.standard_error;
    }
    const double ratio = se80 / se20;
    EXPECT_GE(ratio, 0.4);
    EXPECT_LE(ratio, 0.6);
}

TEST(FeatureAsymmetry, Params) {
    EXPECT_DOUBLE_EQ(feature_asymmetry(make_asymmetric_params(1000, 1, 3, 0.5)), 1001.0 / 1002.0);
    GaussianClassParams g;
    g.mu0 = Vector::Ones(3);
    g.mu1 = Vector::Zero(3);
    g.variance = Vector::Ones(3);
    EXPECT_EQ(feature_asymmetry(g), 0.0);
    g.mu1 = g.mu0;
    try {
        feature_asymmetry(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "no oriented features");
    }
}

TEST(FeatureAsymmetry, ModelAndScaleInvariance) {
    const LinearModel m{(Vector(4) << 3, -2, 1, 0.5).finished(), 0.0};
    EXPECT_EQ(feature_asymmetry(m), 0.75);
    const LinearModel z{(Vector(5) << 3, -2, 1, 0.5, 0).finished(), 0.0};
    EXPECT_EQ(feature_asymmetry(z), 0.75);
    EXPECT_EQ(feature_asymmetry(LinearModel{m.weights * 7.5, 1.0}), 0.75);
}

TEST(WeakOverestimation, HandCase) {
    const LinearModel m{(Vector(4) << 9, 9, 0.5, -0.5).finished(), 0.0};
    const LinearModel ref{(Vector(4) << 1, 1, 0.2, 0.2).finished(), 0.0};
    const Index weak[] = {2, 3};
    const auto w = weak_overestimation(m, ref, weak);
    EXPECT_NEAR(w.total, 0.6, 1e-15);
    EXPECT_NEAR(w.per_feature, 0.3, 1e-15);
    EXPECT_EQ(weak_overestimation(m, m, weak).total, 0.0);
}

TEST(WeakOverestimation, Contract) {
    const LinearModel m{Vector::Ones(3), 0.0};
    EXPECT_THROW(weak_overestimation(m, m, std::span<const Index>{}), Error);
    const Index out_of_range[] = {3};
    EXPECT_THROW(weak_overestimation(m, m, out_of_range), Error);
    EXPECT_EQ(asymmetric_weak_indices(3), (std::vector<Index>{2, 3, 4}));
}
