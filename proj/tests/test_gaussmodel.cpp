#include <gtest/gtest.h>

#include <cmath>

#include "biasamp/gaussmodel.hpp"
#include "biasamp/metrics.hpp"

using namespace biasamp;

namespace {

GaussianClassParams one_dim(double mu0, double mu1, double var, double p) {
    GaussianClassParams g;
    g.mu0 = Vector::Constant(1, mu0);
    g.mu1 = Vector::Constant(1, mu1);
    g.variance = Vector::Constant(1, var);
    g.p = p;
    return g;
}

// Closed-form oracle values, evaluated at 40 significant digits offline.
struct PhiCase {
    double x, phi;
};
constexpr PhiCase kPhi[] = {
    {0.0, 0.5},
    {1.96, 0.97500210485177956379},
    {-1.96, 0.024997895148220436213},
    {0.5, 0.69146246127401310364},
    {5.0, 0.99999971334842812081},
    {-8.0, 6.2209605742717841235e-16},
    {-20.0, 2.7536241186062336951e-89},
};

struct BiasCase {
    double p, D, bias;
};
constexpr BiasCase kBias[] = {
    {0.75, 0.5, 0.23816298146114224214},
    {0.6, 1.0, 0.075371142372015200743},
    {0.9, 2.0, 0.037794702877920806575},
    {0.56, 1.87, 0.011992173356066632284},
    {0.3, 1.0, -0.12848535396532585759},
    {0.75, 10.0, 5.0578208864045530059e-9},
};

}  // namespace

TEST(MakeAsymmetricParams, NoWeakFeatures) {
    const auto g = make_asymmetric_params(0, 1.0, 3.0, 0.5);
    ASSERT_EQ(g.dim(), 2);
    EXPECT_EQ(g.mu0, (Vector(2) << 0, 1).finished());
    EXPECT_EQ(g.mu1, (Vector(2) << 1, 0).finished());
    EXPECT_EQ(g.variance, (Vector(2) << 1, 1).finished());
}

TEST(MakeAsymmetricParams, TwoWeakFeatures) {
    const auto g = make_asymmetric_params(2, 1.0, 10.0, 0.5);
    EXPECT_EQ(g.mu1, (Vector(4) << 1, 0, 1, 1).finished());
    EXPECT_EQ(g.mu0, (Vector(4) << 0, 1, 0, 0).finished());
    EXPECT_EQ(g.variance, (Vector(4) << 1, 1, 10, 10).finished());
    EXPECT_EQ(g.p, 0.5);
}

TEST(MakeAsymmetricParams, ThousandWeakFeatures) {
    const auto g = make_asymmetric_params(1000, 1.0, 3.0, 0.5);
    EXPECT_EQ(g.dim(), 1002);
    EXPECT_EQ(g.variance[0], 1.0);
    EXPECT_EQ(g.variance[1], 1.0);
    EXPECT_EQ(g.variance[1001], 3.0);
    EXPECT_DOUBLE_EQ(feature_asymmetry(g), 1001.0 / 1002.0);
}

TEST(MakeAsymmetricParams, RejectsBadArguments) {
    EXPECT_THROW(make_asymmetric_params(-1, 1, 1, 0.5), Error);
    EXPECT_THROW(make_asymmetric_params(1, 0, 1, 0.5), Error);
    EXPECT_THROW(make_asymmetric_params(1, 1, 1, 1.0), Error);
}

TEST(SampleDataset, SameSeedIsBitIdentical) {
    const auto g = make_asymmetric_params(5, 1.0, 3.0, 0.6);
    const auto a = sample_dataset(g, 1000, 42);
    const auto b = sample_dataset(g, 1000, 42);
    EXPECT_TRUE((a.features.array() == b.features.array()).all());
    EXPECT_EQ(a.labels, b.labels);
    const auto c = sample_dataset(g, 1000, 43);
    EXPECT_FALSE((a.features.array() == c.features.array()).all());
}

TEST(SampleDataset, LabelMeanMatchesPrior) {
    const auto g = one_dim(0, 1, 1, 0.5);
    const auto d = sample_dataset(g, 1'000'000, 7);
    const double mean = static_cast<double>(d.count_positive()) / 1e6;
    EXPECT_NEAR(mean, 0.5, 0.002);
}

TEST(SampleDataset, EqualMeansGiveIndistinguishableClasses) {
    GaussianClassParams g;
    g.mu0 = g.mu1 = (Vector(3) << 1, -2, 0.5).finished();
    g.variance = (Vector(3) << 1, 4, 0.25).finished();
    g.p = 0.5;
    const auto fit = fit_gnb(sample_dataset(g, 200'000, 3));
    for (Index j = 0; j < 3; ++j) {
        const double se = std::sqrt(g.variance[j] * (1 / 100'000.0 + 1 / 100'000.0));
        EXPECT_LT(std::abs(fit.mu1[j] - fit.mu0[j]), 4 * se) << "feature " << j;
    }
}

TEST(SampleDataset, RejectsEmptySample) {
    EXPECT_THROW(sample_dataset(one_dim(0, 1, 1, 0.5), 0, 1), Error);
}

TEST(FitGnb, RecoversParametersWithShrinkingError) {
    const auto g = make_asymmetric_params(3, 1.0, 3.0, 0.7);
    double prev = 1e300;
    for (Index n : {1000, 100'000}) {
        const auto fit = fit_gnb(sample_dataset(g, n, 11));
        const double err = std::max({(fit.mu0 - g.mu0).cwiseAbs().maxCoeff(), (fit.mu1 - g.mu1).cwiseAbs().maxCoeff(),
                                     ((fit.variance - g.variance).array() / g.variance.array()).abs().maxCoeff(),
                                     std::abs(fit.p - g.p)});
        EXPECT_LT(err, 6.0 / std::sqrt(static_cast<double>(n))) << "n=" << n;
        EXPECT_LT(err, prev);
        prev = err;
        if (n == 100'000) {
            EXPECT_LT((fit.mu0 - g.mu0).cwiseAbs().maxCoeff(), 0.02);
            EXPECT_LT((fit.mu1 - g.mu1).cwiseAbs().maxCoeff(), 0.02);
        }
    }
}

TEST(FitGnb, ConstantFeatureGetsFloor) {
    Matrix x(4, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5;
    const auto fit = fit_gnb(LabeledDataset(x, {0, 0, 1, 1}), 1e-6);
    EXPECT_EQ(fit.variance[1], 1e-6);
    EXPECT_GT(fit.variance[0], 1e-6);
}

TEST(FitGnb, TwoPointDataset) {
    Matrix x(2, 1);
    x << 0, 1;
    const auto fit = fit_gnb(LabeledDataset(x, {0, 1}));
    EXPECT_EQ(fit.mu0[0], 0.0);
    EXPECT_EQ(fit.mu1[0], 1.0);
    EXPECT_EQ(fit.p, 0.5);
}

TEST(FitGnb, PooledVarianceByHand) {
    Matrix x(5, 1);
    x << 0, 2, 10, 11, 12;
    const auto fit = fit_gnb(LabeledDataset(x, {0, 0, 1, 1, 1}));
    // within-class squares: 1 + 1 + 1 + 0 + 1 = 4 over n - 2 = 3
    EXPECT_DOUBLE_EQ(fit.variance[0], 4.0 / 3.0);
    EXPECT_DOUBLE_EQ(fit.p, 0.6);
}

TEST(FitGnb, MissingClassIsDegenerate) {
    Matrix x(3, 1);
    x << 0, 1, 2;
    try {
        fit_gnb(LabeledDataset(x, {1, 1, 1}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "degenerate class distribution");
    }
}

TEST(BayesOptimal, SymmetricMidpoint) {
    const auto m = bayes_optimal_model(one_dim(0, 1, 1, 0.5));
    EXPECT_EQ(m.weights[0], 1.0);
    EXPECT_EQ(m.bias, -0.5);
}

TEST(BayesOptimal, SkewedPriorShiftsBias) {
    const auto g = one_dim(0, 1, 1, 0.75);
    const auto m = bayes_optimal_model(g);
    EXPECT_EQ(m.weights[0], 1.0);
    EXPECT_NEAR(m.bias, -0.5 + std::log(3.0), 1e-15);
    // oracle: posterior log-odds at a test point from the two Gaussian densities
    for (double x : {-1.0, 0.2, 0.9, 3.0}) {
        const double l1 = -0.5 * (x - 1) * (x - 1) + std::log(0.75);
        const double l0 = -0.5 * x * x + std::log(0.25);
        EXPECT_NEAR(m.score(Vector::Constant(1, x)), l1 - l0, 1e-12);
    }
}

TEST(BayesOptimal, LabelSwapAntisymmetry) {
    auto g = make_asymmetric_params(3, 1.0, 2.0, 0.7);
    const auto m = bayes_optimal_model(g);
    std::swap(g.mu0, g.mu1);
    g.p = 0.3;
    const auto s = bayes_optimal_model(g);
    EXPECT_TRUE(s.weights.isApprox(-m.weights));
    EXPECT_NEAR(s.bias - std::log(0.3 / 0.7), -(m.bias - std::log(0.7 / 0.3)), 1e-12);
}

TEST(BayesOptimal, SignStructure) {
    GaussianClassParams g;
    g.mu0 = (Vector(4) << 0, 1, 2, 3).finished();
    g.mu1 = (Vector(4) << 1, 0, 2, -1).finished();
    g.variance = (Vector(4) << 1, 2, 3, 4).finished();
    g.p = 0.4;
    const auto m = bayes_optimal_model(g);
    EXPECT_GT(m.weights[0], 0);
    EXPECT_LT(m.weights[1], 0);
    EXPECT_EQ(m.weights[2], 0);
    EXPECT_LT(m.weights[3], 0);
}

TEST(BayesOptimal, DegeneratePrior) {
    auto g = one_dim(0, 1, 1, 0.0);
    try {
        bayes_optimal_model(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "degenerate prior");
    }
    g.p = 1.0;
    EXPECT_THROW(bayes_optimal_model(g), Error);
}

TEST(Mahalanobis, EqualMeansIsZero) {
    EXPECT_EQ(mahalanobis_distance(one_dim(2, 2, 5, 0.5)), 0.0);
}

TEST(Mahalanobis, AsymmetricRegime) {
    const auto g = make_asymmetric_params(1000, 1.0, 3.0, 0.5);
    double sum = 0.0;
    for (Index j = 0; j < g.dim(); ++j) sum += (g.mu1[j] - g.mu0[j]) * (g.mu1[j] - g.mu0[j]) / g.variance[j];
    EXPECT_NEAR(mahalanobis_distance(g), std::sqrt(sum), 1e-12);
    EXPECT_NEAR(mahalanobis_distance(g), std::sqrt(2.0 + 1000.0 / 3.0), 1e-12);
    EXPECT_NEAR(mahalanobis_distance(g), 18.31, 0.005);
}

TEST(Mahalanobis, ScalingVariancesByFourHalvesD) {
    auto g = make_asymmetric_params(7, 1.0, 2.5, 0.5);
    const double d = mahalanobis_distance(g);
    g.variance *= 4.0;
    EXPECT_NEAR(mahalanobis_distance(g), d / 2.0, 1e-14);
}

TEST(StdNormalCdf, MatchesHighPrecisionValues) {
    for (const auto& c : kPhi) {
        EXPECT_NEAR(std_normal_cdf(c.x), c.phi, 1e-12) << "x=" << c.x;
        if (c.phi < 1e-10) { EXPECT_NEAR(std_normal_cdf(c.x) / c.phi, 1.0, 1e-12) << "x=" << c.x; }
    }
    const double tail = std_normal_cdf(-8.0);
    EXPECT_GT(tail, 0.0);
    EXPECT_LT(tail, 1e-15);
}

TEST(StdNormalCdf, Symmetry) {
    for (double x = -10.0; x <= 10.0; x += 0.37)
        EXPECT_LE(std::abs(std_normal_cdf(-x) - (1.0 - std_normal_cdf(x))), 1e-15) << "x=" << x;
}

TEST(TheoreticalBias, BalancedPriorIsZero) {
    for (double D : {0.0, 0.01, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0}) EXPECT_LE(std::abs(theoretical_bias(0.5, D)), 1e-12);
}

TEST(TheoreticalBias, MatchesHighPrecisionValues) {
    for (const auto& c : kBias) EXPECT_NEAR(theoretical_bias(c.p, c.D), c.bias, 1e-12) << c.p << " " << c.D;
}

TEST(TheoreticalBias, SaturationAndLimits) {
    EXPECT_EQ(theoretical_bias(0.75, 0.0), 0.25);
    EXPECT_EQ(theoretical_bias(0.25, 0.0), -0.25);
    EXPECT_EQ(theoretical_bias(0.5, 0.0), 0.0);
    EXPECT_NEAR(theoretical_bias(0.75, 1e-6), 0.25, 1e-9);
    EXPECT_NEAR(theoretical_bias(0.75, 60.0), 0.0, 1e-12);
    EXPECT_EQ(theoretical_bias(0.75, std::numeric_limits<double>::infinity()), 0.0);
    EXPECT_THROW(theoretical_bias(0.75, -1.0), Error);
    EXPECT_THROW(theoretical_bias(0.0, 1.0), Error);
}

TEST(TheoreticalBias, BoundsOverGrid) {
    for (double p = 0.5; p < 0.995; p += 0.01)
        for (double D = 0.0; D <= 8.0; D += 0.05) {
            const double b = theoretical_bias(p, D);
            EXPECT_GE(b, -p - 1e-15);
            EXPECT_LE(b, 1.0 - p + 1e-15);
            EXPECT_GE(b, -1e-15) << "p=" << p << " D=" << D;
        }
}

TEST(TheoreticalBias, AgreesWithMonteCarlo) {
    for (double p : {0.5, 0.75}) {
        for (double D : {0.25, 2.0}) {
            const auto g = one_dim(0.0, D, 1.0, p);
            const auto rep = bias_amplification(bayes_optimal_model(g), sample_dataset(g, 200'000, 99));
            EXPECT_NEAR(rep.bias, theoretical_bias(p, D), 0.01) << p << " " << D;
        }
    }
}
