#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/gaussmodel.hpp"
#include "biasamp/parallel.hpp"
#include "biasamp/sgdtrain.hpp"

namespace biasamp {

/// Empirical bias amplification B = mean(h(x) - y) together with the rates
/// it is built from.
struct BiasReport {
    double bias = 0.0;
    double accuracy = 0.0;
    double predicted_positive_rate = 0.0;
    double empirical_prior = 0.0;
    Index n = 0;
    Index predicted_positive = 0;
    Index actual_positive = 0;
    Index errors = 0;
};

inline BiasReport bias_amplification(const LinearModel& model, const LabeledDataset& data) {
    if (data.size() < 1) throw Error("bias_amplification requires n >= 1");
    if (data.dim() != model.dim()) throw Error("feature dimension does not match model");
    const Vector s = model.scores(data.features);
    BiasReport r;
    r.n = data.size();
    for (Index i = 0; i < r.n; ++i) {
        const int h = s[i] > 0.0 ? 1 : 0;
        const int y = data.labels[static_cast<std::size_t>(i)];
        r.predicted_positive += h;
        r.actual_positive += y;
        r.errors += h != y;
    }
    const double n = static_cast<double>(r.n);
    r.predicted_positive_rate = static_cast<double>(r.predicted_positive) / n;
    r.empirical_prior = static_cast<double>(r.actual_positive) / n;
    r.bias = static_cast<double>(r.predicted_positive - r.actual_positive) / n;
    r.accuracy = 1.0 - static_cast<double>(r.errors) / n;
    return r;
}

struct MeanEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

inline MeanEstimate mean_and_se(std::span<const double> xs) {
    MeanEstimate e;
    if (xs.empty()) return e;
    const double n = static_cast<double>(xs.size());
    e.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - e.mean) * (x - e.mean);
        e.standard_error = std::sqrt(ss / (n - 1.0) / n);
    }
    return e;
}

struct SystematicBias {
    MeanEstimate bias;
    MeanEstimate predicted_positive_rate;
    MeanEstimate accuracy;
    std::vector<BiasReport> runs;
    std::vector<LinearModel> models;
};

/// Monte Carlo estimate of E_S[B_D(h_S)]: per run, draw a fresh training set
/// of size n and a fresh test set of size test_n, fit with `learn` and
/// evaluate on the test set (or on the training set itself when
/// `evaluate_on_train`). `learn(train, shuffle_seed)` returns a model.
template <class Learner>
SystematicBias systematic_bias(const GaussianClassParams& params, Index n, std::size_t runs, Index test_n,
                               std::uint64_t master_seed, Learner&& learn, bool evaluate_on_train = false) {
    if (runs < 1) throw Error("runs must be >= 1");
    if (test_n < 1) throw Error("test_n must be >= 1");
    SystematicBias out;
    out.runs.resize(runs);
    out.models.resize(runs);
    parallel_for(runs, [&](std::size_t r) {
        const RunSeeds seeds = run_seeds(master_seed, r);
        try {
            const LabeledDataset train = sample_dataset(params, n, seeds.data);
            LinearModel model = learn(train, seeds.shuffle);
            out.runs[r] = evaluate_on_train ? bias_amplification(model, train)
                                            : bias_amplification(model, sample_dataset(params, test_n, seeds.test));
            out.models[r] = std::move(model);
        } catch (const std::exception& e) {
            throw RunFailed(r, e.what());
        }
    });
    std::vector<double> b, rate, acc;
    for (const auto& rep : out.runs) {
        b.push_back(rep.bias);
        rate.push_back(rep.predicted_positive_rate);
        acc.push_back(rep.accuracy);
    }
    out.bias = mean_and_se(b);
    out.predicted_positive_rate = mean_and_se(rate);
    out.accuracy = mean_and_se(acc);
    return out;
}

inline SystematicBias systematic_bias(const GaussianClassParams& params, Index n, std::size_t runs,
                                      const SgdConfig& cfg, Index test_n, std::uint64_t master_seed,
                                      bool evaluate_on_train = false) {
    cfg.validate();
    return systematic_bias(params, n, runs, test_n, master_seed,
                           [&cfg](const LabeledDataset& train, std::uint64_t shuffle_seed) {
                               SgdConfig c = cfg;
                               c.shuffle_seed = shuffle_seed;
                               return train_sgd(train, c).model;
                           },
                           evaluate_on_train);
}

namespace detail {
inline double oriented_fraction(const Vector& orientation) {
    Index positive = 0, oriented = 0;
    for (Index j = 0; j < orientation.size(); ++j) {
        if (orientation[j] > 0.0) ++positive;
        if (orientation[j] != 0.0) ++oriented;
    }
    if (oriented == 0) throw Error("no oriented features");
    return static_cast<double>(positive) / static_cast<double>(oriented);
}
}  // namespace detail

/// Fraction of features oriented towards y = 1 (mu1_j > mu0_j); features with
/// mu1_j == mu0_j are left out of both counts.
inline double feature_asymmetry(const GaussianClassParams& params) {
    params.validate();
    return detail::oriented_fraction(params.mu1 - params.mu0);
}

/// Fraction of nonzero weights that are positive.
inline double feature_asymmetry(const LinearModel& model) {
    if (model.dim() < 1) throw Error("model must have dimension >= 1");
    return detail::oriented_fraction(model.weights);
}

struct WeakOverestimation {
    double total = 0.0;        // sum over weak features of |w_j| - |w*_j|
    double per_feature = 0.0;  // total / |weak|
};

inline WeakOverestimation weak_overestimation(const LinearModel& model, const LinearModel& reference,
                                              std::span<const Index> weak_indices) {
    if (weak_indices.empty()) throw Error("weak_indices must be non-empty");
    if (model.dim() != reference.dim()) throw Error("model and reference dimensions differ");
    WeakOverestimation out;
    for (Index j : weak_indices) {
        if (j < 0 || j >= model.dim()) throw Error("weak index out of range");
        out.total += std::abs(model.weights[j]) - std::abs(reference.weights[j]);
    }
    out.per_feature = out.total / static_cast<double>(weak_indices.size());
    return out;
}

/// Weak-feature indices of the asymmetric regime (everything after the two strong features).
inline std::vector<Index> asymmetric_weak_indices(Index num_weak) {
    std::vector<Index> idx(static_cast<std::size_t>(num_weak));
    std::iota(idx.begin(), idx.end(), Index{2});
    return idx;
}

}  // namespace biasamp
