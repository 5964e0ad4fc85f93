#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/gaussmodel.hpp"
#include "biasamp/parallel.hpp"

namespace biasamp {

enum class Loss { logistic, hinge, squared_hinge, modified_huber, perceptron };
enum class Schedule { constant, inverse_scaling };

inline constexpr Loss kAllLosses[] = {Loss::logistic, Loss::hinge, Loss::squared_hinge,
                                      Loss::modified_huber, Loss::perceptron};

inline std::string_view to_string(Loss loss) {
    switch (loss) {
        case Loss::logistic: return "logistic";
        case Loss::hinge: return "hinge";
        case Loss::squared_hinge: return "squared-hinge";
        case Loss::modified_huber: return "modified-huber";
        case Loss::perceptron: return "perceptron";
    }
    return "unknown";
}

inline Loss parse_loss(std::string_view name) {
    for (Loss loss : kAllLosses)
        if (to_string(loss) == name) return loss;
    throw Error("unknown loss '" + std::string(name) + "'");
}

inline std::string_view to_string(Schedule s) {
    return s == Schedule::constant ? "constant" : "inverse-scaling";
}

inline Schedule parse_schedule(std::string_view name) {
    if (name == "constant") return Schedule::constant;
    if (name == "inverse-scaling") return Schedule::inverse_scaling;
    throw Error("unknown schedule '" + std::string(name) + "'");
}

struct SgdConfig {
    Loss loss = Loss::logistic;
    int epochs = 50;
    double eta0 = 0.03;
    Schedule schedule = Schedule::inverse_scaling;
    double power_t = 0.25;
    double l1_lambda = 0.0;
    std::uint64_t shuffle_seed = 0;
    // Only zero initialization is supported.

    void validate() const {
        if (epochs < 1) throw Error("epochs must be >= 1");
        if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw Error("eta0 must be positive");
        if (!(l1_lambda >= 0.0) || !std::isfinite(l1_lambda)) throw Error("l1_lambda must be >= 0");
        if (!std::isfinite(power_t)) throw Error("power_t must be finite");
    }

    double step_size(std::uint64_t t) const {
        if (schedule == Schedule::constant) return eta0;
        return eta0 / std::pow(static_cast<double>(t), power_t);
    }
};

struct TrainedRun {
    LinearModel model;
    double final_train_loss = 0.0;
    int epochs_run = 0;
    std::uint64_t seed = 0;
};

class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(int epoch)
        : Error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

/// Loss and its derivative with respect to the score s = w.x + b.
/// Labels are mapped to t = +-1 and all losses are functions of z = t*s.
struct ScalarLoss {
    double value;
    double dscore;
};

inline ScalarLoss scalar_loss(Loss loss, double score, int y) {
    const double t = y == 1 ? 1.0 : -1.0;
    const double z = t * score;
    switch (loss) {
        case Loss::logistic: {
            // log(1 + e^-z) and its derivative -t * sigmoid(-z), both overflow-free.
            if (z > 0.0) {
                const double e = std::exp(-z);
                return {std::log1p(e), -t * e / (1.0 + e)};
            }
            const double e = std::exp(z);
            return {-z + std::log1p(e), -t / (1.0 + e)};
        }
        case Loss::hinge:
            if (z < 1.0) return {1.0 - z, -t};
            return {0.0, 0.0};
        case Loss::squared_hinge:
            if (z < 1.0) return {(1.0 - z) * (1.0 - z), -2.0 * t * (1.0 - z)};
            return {0.0, 0.0};
        case Loss::modified_huber:
            if (z >= 1.0) return {0.0, 0.0};
            if (z >= -1.0) return {(1.0 - z) * (1.0 - z), -2.0 * t * (1.0 - z)};
            return {-4.0 * z, -4.0 * t};
        case Loss::perceptron:
            if (z <= 0.0) return {-z, -t};
            return {0.0, 0.0};
    }
    throw Error("unknown loss");
}

/// Per-example loss and gradient with respect to (weights, bias); the
/// gradient has d + 1 entries with the bias derivative last.
template <class Row>
std::pair<double, Vector> loss_value_and_gradient(Loss loss, const LinearModel& model, const Row& x, int y) {
    if (x.size() != model.dim()) throw Error("feature dimension does not match model");
    const auto [value, dscore] = scalar_loss(loss, model.score(x), y);
    Vector grad(model.dim() + 1);
    grad.head(model.dim()) = dscore * x.transpose();
    grad[model.dim()] = dscore;
    return {value, grad};
}

inline double mean_loss(Loss loss, const LinearModel& model, const LabeledDataset& data) {
    const Vector s = model.scores(data.features);
    double total = 0.0;
    for (Index i = 0; i < data.size(); ++i)
        total += scalar_loss(loss, s[i], data.labels[static_cast<std::size_t>(i)]).value;
    return total / static_cast<double>(data.size());
}

/// Soft-threshold every weight towards zero by `threshold`.
inline void soft_threshold(Vector& w, double threshold) {
    for (Index j = 0; j < w.size(); ++j) {
        const double v = w[j];
        w[j] = v > threshold ? v - threshold : (v < -threshold ? v + threshold : 0.0);
    }
}

/// Single-example SGD, one pass per epoch over a freshly seeded shuffle.
/// With l1_lambda > 0 every update is followed by a proximal soft-threshold
/// of the weights (not the bias) by eta_t * l1_lambda.
/// Identical (data, cfg) produce a bit-identical model.
inline TrainedRun train_sgd(const LabeledDataset& data, const SgdConfig& cfg) {
    cfg.validate();
    data.validate();
    const Index n1 = data.count_positive();
    if (n1 == 0 || n1 == data.size()) throw Error("degenerate class distribution");

    const Index n = data.size();
    LinearModel model{Vector::Zero(data.dim()), 0.0};
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(cfg.shuffle_seed);

    std::uint64_t t = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Index i : order) {
            const double eta = cfg.step_size(++t);
            const auto x = data.row(i);
            const double g = scalar_loss(cfg.loss, model.score(x), data.labels[static_cast<std::size_t>(i)]).dscore;
            if (g != 0.0) {
                model.weights.noalias() -= (eta * g) * x.transpose();
                model.bias -= eta * g;
            }
            if (cfg.l1_lambda > 0.0) soft_threshold(model.weights, eta * cfg.l1_lambda);
        }
        if (!model.is_finite()) throw TrainingDiverged(epoch);
    }

    TrainedRun run;
    run.final_train_loss = mean_loss(cfg.loss, model, data);
    if (!std::isfinite(run.final_train_loss)) throw TrainingDiverged(cfg.epochs);
    run.model = std::move(model);
    run.epochs_run = cfg.epochs;
    run.seed = cfg.shuffle_seed;
    return run;
}

/// Seeds used for run `r` of a multi-run experiment.
struct RunSeeds {
    std::uint64_t data;
    std::uint64_t shuffle;
    std::uint64_t test;
};

inline RunSeeds run_seeds(std::uint64_t master_seed, std::size_t run) {
    return {substream_seed(master_seed, run, 0), substream_seed(master_seed, run, 1),
            substream_seed(master_seed, run, 2)};
}

class RunFailed : public Error {
public:
    RunFailed(std::size_t run, const std::string& what)
        : Error("run " + std::to_string(run) + ": " + what), run_(run) {}
    std::size_t run() const { return run_; }

private:
    std::size_t run_;
};

namespace detail {
template <class Fn>
std::vector<TrainedRun> run_indexed(std::size_t runs, Fn&& fn) {
    if (runs < 1) throw Error("runs must be >= 1");
    std::vector<TrainedRun> out(runs);
    parallel_for(runs, [&](std::size_t r) {
        try {
            out[r] = fn(r);
        } catch (const std::exception& e) {
            throw RunFailed(r, e.what());
        }
    });
    return out;
}
}  // namespace detail

/// Fresh n-sample training set per run, drawn from substream (master_seed, run).
inline std::vector<TrainedRun> train_many(const GaussianClassParams& params, Index n, std::size_t runs,
                                          const SgdConfig& cfg, std::uint64_t master_seed) {
    return detail::run_indexed(runs, [&](std::size_t r) {
        const RunSeeds seeds = run_seeds(master_seed, r);
        SgdConfig c = cfg;
        c.shuffle_seed = seeds.shuffle;
        return train_sgd(sample_dataset(params, n, seeds.data), c);
    });
}

/// Fixed dataset; only the shuffle seed varies across runs.
inline std::vector<TrainedRun> train_many(const LabeledDataset& data, std::size_t runs, const SgdConfig& cfg,
                                          std::uint64_t master_seed) {
    return detail::run_indexed(runs, [&](std::size_t r) {
        SgdConfig c = cfg;
        c.shuffle_seed = run_seeds(master_seed, r).shuffle;
        return train_sgd(data, c);
    });
}

}  // namespace biasamp
