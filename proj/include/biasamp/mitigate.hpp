#pragma once

// Influence-directed mitigations for linear final layers: feature parity,
// class-wise experts (masked models chosen by a constrained grid search),
// and the l1-regularization grid baseline.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/influence.hpp"
#include "biasamp/metrics.hpp"
#include "biasamp/parallel.hpp"
#include "biasamp/sgdtrain.hpp"

namespace biasamp {

namespace detail {
inline void check_influence_dim(const LinearModel& model, const InfluenceVector& infl) {
    if (infl.size() != model.dim()) throw Error("influence vector and model dimensions differ");
}
}  // namespace detail

/// Keeps the weights of the top-alpha positive and top-beta negative
/// influence features and zeroes all others. The bias term is unchanged.
inline LinearModel apply_mask(const LinearModel& model, const RankedFeatures& ranked, Index alpha, Index beta) {
    if (alpha < 0 || alpha > static_cast<Index>(ranked.positive.size()))
        throw Error("alpha out of range [0, " + std::to_string(ranked.positive.size()) + "]");
    if (beta < 0 || beta > static_cast<Index>(ranked.negative.size()))
        throw Error("beta out of range [0, " + std::to_string(ranked.negative.size()) + "]");
    LinearModel out{Vector::Zero(model.dim()), model.bias};
    for (Index k = 0; k < alpha; ++k) {
        const Index j = ranked.positive[static_cast<std::size_t>(k)];
        out.weights[j] = model.weights[j];
    }
    for (Index k = 0; k < beta; ++k) {
        const Index j = ranked.negative[static_cast<std::size_t>(k)];
        out.weights[j] = model.weights[j];
    }
    return out;
}

inline LinearModel apply_mask(const LinearModel& model, const InfluenceVector& infl, Index alpha, Index beta) {
    detail::check_influence_dim(model, infl);
    return apply_mask(model, rank_features(infl), alpha, beta);
}

/// How the bias term absorbs a removed feature j in feature parity.
///   subtract:          b -= w_j * mean_j
///   mean_substitution: b += w_j * mean_j (keeps the expected logit)
enum class ParityAdjustment { subtract, mean_substitution };

inline std::string_view to_string(ParityAdjustment a) {
    return a == ParityAdjustment::subtract ? "subtract" : "mean-substitution";
}

inline ParityAdjustment parse_parity_adjustment(std::string_view s) {
    if (s == "subtract") return ParityAdjustment::subtract;
    if (s == "mean-substitution") return ParityAdjustment::mean_substitution;
    throw Error("unknown parity adjustment '" + std::string(s) + "'");
}

/// Removes the lowest-|influence| features of the majority orientation until
/// both orientations keep the same number of features.
inline LinearModel feature_parity(const LinearModel& model, const InfluenceVector& infl, const Vector& feature_means,
                                  ParityAdjustment adjustment = ParityAdjustment::subtract) {
    detail::check_influence_dim(model, infl);
    if (feature_means.size() != model.dim()) throw Error("feature_means dimension does not match model");
    const RankedFeatures ranked = rank_features(infl);
    const std::size_t keep = std::min(ranked.positive.size(), ranked.negative.size());
    const auto& majority = ranked.positive.size() > keep ? ranked.positive : ranked.negative;

    LinearModel out = model;
    const double sign = adjustment == ParityAdjustment::subtract ? -1.0 : 1.0;
    // Ranked lists run from strongest to weakest, so the tail is removed.
    for (std::size_t k = keep; k < majority.size(); ++k) {
        const Index j = majority[k];
        out.bias += sign * out.weights[j] * feature_means[j];
        out.weights[j] = 0.0;
    }
    return out;
}

struct ExpertSelection {
    Index alpha = 0;
    Index beta = 0;
    LinearModel model;
    double train_bias = 0.0;
    double train_accuracy = 0.0;
    std::size_t search_evaluations = 0;
};

struct ExpertSearchOptions {
    Index stride = 1;     // 0 selects auto_stride(d)
    bool refine = true;   // stride-1 pass around the coarse optimum when stride > 1
    // When set, |bias| is measured here instead of on the training set; the
    // loss constraint and the accuracy tie-break always use the training set.
    const LabeledDataset* validation = nullptr;
};

/// Grid stride for large models: 1 up to d = 2000, then ceil(d / 512).
inline Index auto_stride(Index d) {
    return d > 2000 ? (d + 511) / 512 : 1;
}

namespace detail {

// Scores of every masked model on one dataset, as rank-ordered prefix sums:
// score_i(a, b) = bias + pos(a, i) + neg(b, i).
struct PrefixScores {
    Matrix pos;  // (P + 1) x n
    Matrix neg;  // (N + 1) x n
    double bias = 0.0;
    const std::vector<int>* labels = nullptr;
    Index actual_positive = 0;

    PrefixScores(const LinearModel& model, const RankedFeatures& ranked, const LabeledDataset& data)
        : bias(model.bias), labels(&data.labels), actual_positive(data.count_positive()) {
        pos = build(model, ranked.positive, data);
        neg = build(model, ranked.negative, data);
    }

    static Matrix build(const LinearModel& model, const std::vector<Index>& order, const LabeledDataset& data) {
        const Index n = data.size();
        Matrix m(static_cast<Index>(order.size()) + 1, n);
        m.row(0).setZero();
        for (std::size_t k = 0; k < order.size(); ++k) {
            const Index j = order[k];
            const Index r = static_cast<Index>(k) + 1;
            m.row(r) = m.row(r - 1) + model.weights[j] * data.features.col(j).transpose();
        }
        return m;
    }

    // (predicted positives, errors) of cell (a, b)
    std::pair<Index, Index> evaluate(Index a, Index b) const {
        Index pp = 0, err = 0;
        const Index n = pos.cols();
        const double* pa = pos.row(a).data();
        const double* nb = neg.row(b).data();
        for (Index i = 0; i < n; ++i) {
            const int h = bias + pa[i] + nb[i] > 0.0 ? 1 : 0;
            pp += h;
            err += h != (*labels)[static_cast<std::size_t>(i)];
        }
        return {pp, err};
    }
};

// Lexicographic selection key; smaller is better.
struct CellKey {
    Index abs_bias_count;  // |predicted positives - actual positives|
    Index errors;          // training 0-1 errors
    Index size;            // alpha + beta
    Index alpha;
    Index beta;

    auto tie() const { return std::tie(abs_bias_count, errors, size, alpha, beta); }
    friend bool operator<(const CellKey& x, const CellKey& y) { return x.tie() < y.tie(); }
};

class ExpertGrid {
public:
    ExpertGrid(const LinearModel& model, const RankedFeatures& ranked, const LabeledDataset& train,
               const LabeledDataset* validation)
        : train_(model, ranked, train) {
        if (validation) validation_.emplace(model, ranked, *validation);
        P_ = static_cast<Index>(ranked.positive.size());
        N_ = static_cast<Index>(ranked.negative.size());
        reference_errors_ = train_.evaluate(P_, N_).second;
    }

    Index positive_count() const { return P_; }
    Index negative_count() const { return N_; }

    // nullopt when the cell violates the training-loss constraint.
    std::optional<CellKey> evaluate(Index a, Index b) const {
        const auto [pp, err] = train_.evaluate(a, b);
        if (err > reference_errors_) return std::nullopt;
        Index bias_count;
        if (validation_) {
            bias_count = std::abs(validation_->evaluate(a, b).first - validation_->actual_positive);
        } else {
            bias_count = std::abs(pp - train_.actual_positive);
        }
        return CellKey{bias_count, err, a + b, a, b};
    }

    // Best feasible cell over alphas x betas, evaluated row-parallel.
    std::optional<CellKey> search(const std::vector<Index>& alphas, const std::vector<Index>& betas,
                                  std::size_t& evaluations) const {
        std::vector<std::optional<CellKey>> best(alphas.size());
        parallel_for(alphas.size(), [&](std::size_t r) {
            for (Index b : betas) {
                auto key = evaluate(alphas[r], b);
                if (key && (!best[r] || *key < *best[r])) best[r] = key;
            }
        });
        evaluations += alphas.size() * betas.size();
        std::optional<CellKey> out;
        for (const auto& k : best)
            if (k && (!out || *k < *out)) out = k;
        return out;
    }

private:
    PrefixScores train_;
    std::optional<PrefixScores> validation_;
    Index P_ = 0, N_ = 0;
    Index reference_errors_ = 0;
};

inline std::vector<Index> strided_range(Index last, Index stride) {
    std::vector<Index> v;
    for (Index a = 0; a <= last; a += stride) v.push_back(a);
    if (v.back() != last) v.push_back(last);
    return v;
}

}  // namespace detail

/// Chooses (alpha, beta) minimizing |bias| subject to the masked model making
/// no more training errors than the full model. Ties go to higher training
/// accuracy, then smaller alpha + beta, then lexicographically smaller
/// (alpha, beta). With stride 1 the search is exhaustive.
inline ExpertSelection expert_search(const LinearModel& model, const InfluenceVector& infl,
                                     const LabeledDataset& train, const ExpertSearchOptions& opts = {}) {
    detail::check_influence_dim(model, infl);
    if (train.size() < 1) throw Error("training set is empty");
    if (train.dim() != model.dim()) throw Error("training data dimension does not match model");
    if (opts.validation && opts.validation->dim() != model.dim())
        throw Error("validation data dimension does not match model");
    if (opts.stride < 0) throw Error("stride must be positive");
    const Index stride = opts.stride == 0 ? auto_stride(model.dim()) : opts.stride;

    const RankedFeatures ranked = rank_features(infl);
    const detail::ExpertGrid grid(model, ranked, train, opts.validation);
    const Index P = grid.positive_count(), N = grid.negative_count();

    std::size_t evaluations = 0;
    auto best = grid.search(detail::strided_range(P, stride), detail::strided_range(N, stride), evaluations);
    // The full cell (P, N) is always feasible, so best is engaged.
    if (stride > 1 && opts.refine && best) {
        auto on_coarse = [&](Index v, Index last) { return v % stride == 0 || v == last; };
        std::vector<Index> alphas, betas;
        for (Index a = std::max<Index>(0, best->alpha - stride + 1); a <= std::min(P, best->alpha + stride - 1); ++a)
            alphas.push_back(a);
        for (Index b = std::max<Index>(0, best->beta - stride + 1); b <= std::min(N, best->beta + stride - 1); ++b)
            betas.push_back(b);
        for (Index a : alphas)
            for (Index b : betas) {
                if (on_coarse(a, P) && on_coarse(b, N)) continue;
                ++evaluations;
                auto key = grid.evaluate(a, b);
                if (key && *key < *best) best = key;
            }
    }
    if (!best) throw Error("no feasible expert found");

    ExpertSelection sel;
    sel.alpha = best->alpha;
    sel.beta = best->beta;
    sel.model = apply_mask(model, ranked, sel.alpha, sel.beta);
    const BiasReport rep = bias_amplification(sel.model, train);
    sel.train_bias = rep.bias;
    sel.train_accuracy = rep.accuracy;
    sel.search_evaluations = evaluations;
    return sel;
}

inline ExpertSelection expert_search(const LinearModel& model, const InfluenceVector& infl,
                                     const LabeledDataset& train, Index stride) {
    ExpertSearchOptions opts;
    opts.stride = stride;
    if (stride < 1) throw Error("stride must be positive");
    return expert_search(model, infl, train, opts);
}

struct L1Selection {
    LinearModel model;
    double lambda = 0.0;
    double train_bias = 0.0;
    double train_accuracy = 0.0;
    std::size_t diverged = 0;
};

/// Trains one l1-regularized model per lambda and keeps the one minimizing
/// |train bias| subject to training 0-1 loss <= the unregularized model's.
/// Ties go to higher training accuracy, then to the larger lambda.
inline L1Selection l1_grid_baseline(const LabeledDataset& train, const SgdConfig& cfg,
                                    std::span<const double> lambda_grid) {
    if (lambda_grid.empty()) throw Error("lambda grid must be non-empty");
    for (double l : lambda_grid)
        if (!(l >= 0.0) || !std::isfinite(l)) throw Error("lambda values must be finite and >= 0");

    SgdConfig base = cfg;
    base.l1_lambda = 0.0;
    const TrainedRun reference = train_sgd(train, base);
    const Index reference_errors = bias_amplification(reference.model, train).errors;

    std::vector<std::optional<LinearModel>> models(lambda_grid.size());
    parallel_for(lambda_grid.size(), [&](std::size_t k) {
        if (lambda_grid[k] == 0.0) {
            models[k] = reference.model;
            return;
        }
        SgdConfig c = cfg;
        c.l1_lambda = lambda_grid[k];
        try {
            models[k] = train_sgd(train, c).model;
        } catch (const TrainingDiverged&) {
        }
    });

    L1Selection out;
    std::optional<std::tuple<Index, Index, double>> best_key;
    std::size_t best = 0;
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (!models[k]) {
            ++out.diverged;
            continue;
        }
        const BiasReport rep = bias_amplification(*models[k], train);
        if (rep.errors > reference_errors) continue;
        const auto key = std::make_tuple(std::abs(rep.predicted_positive - rep.actual_positive), rep.errors,
                                         -lambda_grid[k]);
        if (!best_key || key < *best_key) {
            best_key = key;
            best = k;
        }
    }
    if (out.diverged == models.size()) throw Error("all l1 runs diverged");
    if (!best_key) throw Error("no lambda in the grid satisfies the training-loss constraint; include 0");
    out.model = *models[best];
    out.lambda = lambda_grid[best];
    const BiasReport rep = bias_amplification(out.model, train);
    out.train_bias = rep.bias;
    out.train_accuracy = rep.accuracy;
    return out;
}

}  // namespace biasamp
