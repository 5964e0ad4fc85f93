#pragma once

// Gaussian class-conditional model with a shared diagonal covariance,
// its sampler, Gaussian naive Bayes estimation, the Bayes-optimal linear
// classifier and the closed-form bias amplification of that classifier.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <limits>
#include <numbers>
#include <random>

#include "biasamp/core.hpp"

namespace biasamp {

/// Class means, shared diagonal covariance and prior Pr[y = 1].
/// `variance` holds variances (not standard deviations).
struct GaussianClassParams {
    Vector mu0;
    Vector mu1;
    Vector variance;
    double p = 0.5;

    Index dim() const { return mu0.size(); }

    void validate() const {
        if (mu0.size() < 1) throw Error("params must have dimension >= 1");
        if (mu1.size() != mu0.size() || variance.size() != mu0.size())
            throw Error("mu0, mu1 and variance must have identical dimension");
        if (!((variance.array() > 0.0).all()) || !variance.allFinite())
            throw Error("variances must be positive and finite");
        if (!(p > 0.0 && p < 1.0)) throw Error("prior p must lie in (0, 1)");
    }
};

/// Feature-asymmetric regime: two strong features, one oriented towards each
/// class, followed by `num_weak` weak features all oriented towards y = 1.
///   mu0 = (0, 1, 0, ..., 0), mu1 = (1, 0, 1, ..., 1)
///   variance = (strong, strong, weak, ..., weak)
inline GaussianClassParams make_asymmetric_params(Index num_weak, double strong_variance,
                                                  double weak_variance, double p) {
    if (num_weak < 0) throw Error("num_weak must be non-negative");
    if (!(strong_variance > 0.0) || !(weak_variance > 0.0)) throw Error("variances must be positive");
    const Index d = 2 + num_weak;
    GaussianClassParams params;
    params.mu0 = Vector::Zero(d);
    params.mu0[1] = 1.0;
    params.mu1 = Vector::Ones(d);
    params.mu1[1] = 0.0;
    params.variance = Vector::Constant(d, weak_variance);
    params.variance.head(2).setConstant(strong_variance);
    params.p = p;
    params.validate();
    return params;
}

/// n i.i.d. draws; identical (params, n, seed) give a bit-identical dataset.
inline LabeledDataset sample_dataset(const GaussianClassParams& params, Index n, std::uint64_t seed) {
    params.validate();
    if (n < 1) throw Error("sample size must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const Index d = params.dim();
    const Vector sd = params.variance.cwiseSqrt();
    LabeledDataset data;
    data.features.resize(n, d);
    data.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const int y = unif(rng) < params.p ? 1 : 0;
        data.labels[static_cast<std::size_t>(i)] = y;
        const Vector& mu = y == 1 ? params.mu1 : params.mu0;
        for (Index j = 0; j < d; ++j) data.features(i, j) = mu[j] + sd[j] * normal(rng);
    }
    return data;
}

inline constexpr double kDefaultVarianceFloor = 1e-9;

/// Gaussian naive Bayes with a pooled (class-shared) diagonal covariance.
/// Variances are clamped below by `variance_floor`.
inline GaussianClassParams fit_gnb(const LabeledDataset& data, double variance_floor = kDefaultVarianceFloor) {
    data.validate();
    if (!(variance_floor > 0.0)) throw Error("variance_floor must be positive");
    const Index n = data.size();
    const Index d = data.dim();
    const Index n1 = data.count_positive();
    const Index n0 = n - n1;
    if (n0 < 1 || n1 < 1) throw Error("degenerate class distribution");

    GaussianClassParams params;
    params.mu0 = Vector::Zero(d);
    params.mu1 = Vector::Zero(d);
    for (Index i = 0; i < n; ++i) {
        if (data.labels[static_cast<std::size_t>(i)] == 1)
            params.mu1 += data.row(i).transpose();
        else
            params.mu0 += data.row(i).transpose();
    }
    params.mu0 /= static_cast<double>(n0);
    params.mu1 /= static_cast<double>(n1);

    Vector ss = Vector::Zero(d);
    for (Index i = 0; i < n; ++i) {
        const Vector& mu = data.labels[static_cast<std::size_t>(i)] == 1 ? params.mu1 : params.mu0;
        ss += (data.row(i).transpose() - mu).cwiseAbs2();
    }
    const double dof = static_cast<double>(std::max<Index>(n - 2, 1));
    params.variance = (ss / dof).cwiseMax(variance_floor);
    params.p = static_cast<double>(n1) / static_cast<double>(n);
    return params;
}

/// Bayes-optimal linear classifier for the shared-diagonal Gaussian model:
///   w = Sigma^-1 (mu1 - mu0)
///   b = -1/2 (mu1 - mu0)^T Sigma^-1 (mu1 + mu0) + log(p / (1 - p))
inline LinearModel bayes_optimal_model(const GaussianClassParams& params) {
    if (!(params.p > 0.0 && params.p < 1.0)) throw Error("degenerate prior");
    params.validate();
    LinearModel model;
    model.weights = (params.mu1 - params.mu0).cwiseQuotient(params.variance);
    model.bias = -0.5 * model.weights.dot(params.mu1 + params.mu0) + std::log(params.p / (1.0 - params.p));
    return model;
}

inline double mahalanobis_distance(const GaussianClassParams& params) {
    params.validate();
    return std::sqrt((params.mu1 - params.mu0).cwiseAbs2().cwiseQuotient(params.variance).sum());
}

/// Standard normal CDF. Uses erfc so that both tails keep full relative
/// precision; the symmetry Phi(-x) = 1 - Phi(x) holds to rounding.
inline double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Bias amplification B = Pr[h*(x) = 1] - p of the Bayes-optimal classifier
/// as a function of the prior p and Mahalanobis distance D:
///   B = 1 - p - (1 - p) Phi(beta + D/2) - p Phi(beta - D/2),
///   beta = -log(p / (1 - p)) / D.
/// At D = 0 the classifier always predicts the prior mode, so B saturates at
/// 1 - p for p > 1/2, -p for p < 1/2, and 0 at p = 1/2.
inline double theoretical_bias(double p, double D) {
    if (!(p > 0.0 && p < 1.0)) throw Error("prior p must lie in (0, 1)");
    if (!(D >= 0.0) || std::isinf(D)) {
        if (std::isinf(D) && D > 0) return 0.0;
        throw Error("Mahalanobis distance must be non-negative");
    }
    const double log_odds = std::log(p / (1.0 - p));
    if (D == 0.0) {
        if (log_odds > 0.0) return 1.0 - p;
        if (log_odds < 0.0) return -p;
        return 0.0;
    }
    const double beta = -log_odds / D;
    return 1.0 - p - (1.0 - p) * std_normal_cdf(beta + 0.5 * D) - p * std_normal_cdf(beta - 0.5 * D);
}

}  // namespace biasamp
