#pragma once

// Experiment runners. Each kind produces a Table whose rows are ordered by
// sweep coordinate; render() adds the '#' metadata header.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/gaussmodel.hpp"
#include "biasamp/harness/config.hpp"
#include "biasamp/harness/io.hpp"
#include "biasamp/influence.hpp"
#include "biasamp/metrics.hpp"
#include "biasamp/mitigate.hpp"
#include "biasamp/sgdtrain.hpp"

namespace biasamp::harness {

inline constexpr std::string_view kToolVersion = "biasamp 0.1.0";

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) {
        if (row.size() != header.size()) throw Error("internal: row width does not match header");
        rows.push_back(std::move(row));
    }
};

inline std::string render(const Table& t, const ExperimentConfig& cfg) {
    std::string s;
    s += "# tool " + std::string(kToolVersion) + "\n";
    s += "# kind " + std::string(to_string(cfg.kind)) + "\n";
    s += "# config_hash " + config_hash(cfg) + "\n";
    s += "# seed " + std::to_string(cfg.master_seed) + "\n";
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
        s += '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
    return s;
}

namespace detail {

inline std::string num(double v) { return format_double(v); }
inline std::string num(Index v) { return std::to_string(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

template <class Fn>
auto at_point(const std::string& where, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw Error(where + ": " + e.what());
    }
}

inline CsvOptions csv_options(const ExperimentConfig& cfg) {
    CsvOptions o;
    o.label = parse_label_column(cfg.label_col);
    o.orient_majority_positive = cfg.orient_majority;
    return o;
}

inline std::string dataset_id(const std::string& path) {
    return path.empty() ? "synthetic" : std::filesystem::path(path).stem().string();
}

inline GaussianClassParams generator(const ExperimentConfig& cfg, Index num_weak, double weak_variance) {
    return make_asymmetric_params(num_weak, cfg.strong_variance, weak_variance, cfg.p);
}

inline void require_non_empty(const char* key, std::size_t size) {
    if (size == 0) throw Error(std::string(key) + " must be non-empty");
}

}  // namespace detail

/// Closed-form bias of the Bayes-optimal classifier over a (D, p*) grid.
inline Table theory_curve(const ExperimentConfig& cfg) {
    using detail::num;
    detail::require_non_empty("p_list", cfg.p_list.size());
    detail::require_non_empty("d_list", cfg.d_list.size());
    Table t{{"D", "p_star", "bias", "predicted_positive_rate"}, {}};
    for (double D : cfg.d_list)
        for (double p : cfg.p_list) {
            const double b = detail::at_point("theory-curve point D=" + num(D) + ", p=" + num(p),
                                              [&] { return theoretical_bias(p, D); });
            t.add({num(D), num(p), num(b), num(b + p)});
        }
    return t;
}

namespace detail {
inline Table sweep_table() {
    return {{"n", "num_weak", "weak_variance", "weak_sd", "predicted_positive_rate", "rate_se", "bias", "bias_se",
             "accuracy", "runs"},
            {}};
}

inline void add_sweep_row(Table& t, const ExperimentConfig& cfg, Index n, Index k, double wv) {
    const auto params = generator(cfg, k, wv);
    const SystematicBias sb = at_point(
        std::string(to_string(cfg.kind)) + " point n=" + num(n) + ", num_weak=" + num(k) + ", weak_variance=" + num(wv),
        [&] { return systematic_bias(params, n, cfg.runs, cfg.sgd, cfg.test_n, cfg.master_seed,
                                     cfg.eval_on == EvalSet::train); });
    t.add({num(n), num(k), num(wv), num(std::sqrt(wv)), num(sb.predicted_positive_rate.mean),
           num(sb.predicted_positive_rate.standard_error), num(sb.bias.mean), num(sb.bias.standard_error),
           num(sb.accuracy.mean), num(cfg.runs)});
}
}  // namespace detail

/// Predicted-positive rate against the number of weak features, per training-set size.
inline Table weak_sweep(const ExperimentConfig& cfg) {
    detail::require_non_empty("n_list", cfg.n_list.size());
    detail::require_non_empty("num_weak_list", cfg.num_weak_list.size());
    Table t = detail::sweep_table();
    for (Index n : cfg.n_list)
        for (Index k : cfg.num_weak_list) detail::add_sweep_row(t, cfg, n, k, cfg.weak_variance);
    return t;
}

/// Predicted-positive rate against the weak-feature variance at a fixed feature count.
inline Table variance_sweep(const ExperimentConfig& cfg) {
    detail::require_non_empty("n_list", cfg.n_list.size());
    detail::require_non_empty("weak_variance_list", cfg.weak_variance_list.size());
    Table t = detail::sweep_table();
    for (Index n : cfg.n_list)
        for (double wv : cfg.weak_variance_list) detail::add_sweep_row(t, cfg, n, cfg.num_weak, wv);
    return t;
}

struct OverestimationPoint {
    MeanEstimate total;
    MeanEstimate per_feature;
};

/// Mean over runs of sum_{weak j} |w_j| - |w*_j| for SGD models trained on n samples.
inline OverestimationPoint overestimation_point(const GaussianClassParams& params, Index num_weak, Index n,
                                                std::size_t runs, const SgdConfig& sgd, std::uint64_t master_seed) {
    const LinearModel reference = bayes_optimal_model(params);
    const auto weak = asymmetric_weak_indices(num_weak);
    const auto trained = train_many(params, n, runs, sgd, master_seed);
    std::vector<double> total, per;
    for (const auto& run : trained) {
        const auto w = weak_overestimation(run.model, reference, weak);
        total.push_back(w.total);
        per.push_back(w.per_feature);
    }
    return {mean_and_se(total), mean_and_se(per)};
}

/// Weak-coefficient overestimation against training-set size, per weak variance.
inline Table size_sweep(const ExperimentConfig& cfg) {
    using detail::num;
    detail::require_non_empty("n_list", cfg.n_list.size());
    detail::require_non_empty("weak_variance_list", cfg.weak_variance_list.size());
    if (cfg.num_weak < 1) throw Error("size-sweep needs num_weak >= 1");
    Table t{{"weak_variance", "weak_sd", "n", "num_weak", "overestimation", "overestimation_se", "per_feature", "runs"},
            {}};
    for (double wv : cfg.weak_variance_list)
        for (Index n : cfg.n_list) {
            const auto params = detail::generator(cfg, cfg.num_weak, wv);
            const auto pt = detail::at_point("size-sweep point weak_variance=" + num(wv) + ", n=" + num(n), [&] {
                return overestimation_point(params, cfg.num_weak, n, cfg.runs, cfg.sgd, cfg.master_seed);
            });
            t.add({num(wv), num(std::sqrt(wv)), num(n), num(cfg.num_weak), num(pt.total.mean),
                   num(pt.total.standard_error), num(pt.per_feature.mean), num(cfg.runs)});
        }
    return t;
}

/// Systematic bias against the number of weak features for each SGD loss.
inline Table loss_comparison(const ExperimentConfig& cfg) {
    using detail::num;
    detail::require_non_empty("losses", cfg.losses.size());
    detail::require_non_empty("num_weak_list", cfg.num_weak_list.size());
    Table t{{"loss", "n", "num_weak", "bias", "bias_se", "predicted_positive_rate", "accuracy", "runs"}, {}};
    for (Loss loss : cfg.losses)
        for (Index k : cfg.num_weak_list) {
            SgdConfig sgd = cfg.sgd;
            sgd.loss = loss;
            const auto params = detail::generator(cfg, k, cfg.weak_variance);
            const auto sb = detail::at_point(
                "loss-comparison point loss=" + std::string(to_string(loss)) + ", num_weak=" + num(k), [&] {
                    return systematic_bias(params, cfg.n, cfg.runs, sgd, cfg.test_n, cfg.master_seed,
                                           cfg.eval_on == EvalSet::train);
                });
            t.add({std::string(to_string(loss)), num(cfg.n), num(k), num(sb.bias.mean), num(sb.bias.standard_error),
                   num(sb.predicted_positive_rate.mean), num(sb.accuracy.mean), num(cfg.runs)});
        }
    return t;
}

struct GnbSplitResult {
    BiasReport test;
    double D = 0.0;
    double fitted_p = 0.0;
};

struct GnbEvaluation {
    std::string dataset;
    Index n = 0;
    Index d = 0;
    double p_star = 0.0;
    std::vector<GnbSplitResult> splits;
    MeanEstimate bias, accuracy, D, fitted_p;
    double theoretical = 0.0;  // closed-form bias at the mean fitted (p, D)
};

/// Gaussian naive Bayes fit on stratified splits of a CSV dataset.
inline GnbEvaluation gnb_evaluation(const ExperimentConfig& cfg) {
    if (cfg.dataset.empty()) throw Error("dataset-eval requires dataset = <csv path>");
    const CsvDataset csv = load_csv(cfg.dataset, detail::csv_options(cfg));
    GnbEvaluation ev;
    ev.dataset = detail::dataset_id(cfg.dataset);
    ev.n = csv.data.size();
    ev.d = csv.data.dim();
    ev.p_star = static_cast<double>(csv.data.count_positive()) / static_cast<double>(ev.n);
    ev.splits.resize(cfg.runs);
    parallel_for(cfg.runs, [&](std::size_t r) {
        ev.splits[r] = detail::at_point("dataset-eval split " + std::to_string(r), [&] {
            Split s = stratified_split(csv.data, cfg.test_fraction, substream_seed(cfg.master_seed, r));
            if (cfg.standardize) {
                const auto st = Standardizer::fit(s.train);
                s.train = st.apply(std::move(s.train));
                s.test = st.apply(std::move(s.test));
            }
            const auto fit = fit_gnb(s.train, cfg.variance_floor);
            return GnbSplitResult{bias_amplification(bayes_optimal_model(fit), s.test), mahalanobis_distance(fit),
                                  fit.p};
        });
    });
    std::vector<double> b, a, D, p;
    for (const auto& s : ev.splits) {
        b.push_back(s.test.bias);
        a.push_back(s.test.accuracy);
        D.push_back(s.D);
        p.push_back(s.fitted_p);
    }
    ev.bias = mean_and_se(b);
    ev.accuracy = mean_and_se(a);
    ev.D = mean_and_se(D);
    ev.fitted_p = mean_and_se(p);
    ev.theoretical = theoretical_bias(ev.fitted_p.mean, ev.D.mean);
    return ev;
}

inline Table dataset_eval(const ExperimentConfig& cfg) {
    using detail::num;
    const GnbEvaluation ev = gnb_evaluation(cfg);
    Table t{{"dataset", "split", "p_star", "D", "bias", "accuracy", "theoretical_bias"}, {}};
    for (std::size_t r = 0; r < ev.splits.size(); ++r) {
        const auto& s = ev.splits[r];
        t.add({ev.dataset, num(r), num(ev.p_star), num(s.D), num(s.test.bias), num(s.test.accuracy),
               num(theoretical_bias(s.fitted_p, s.D))});
    }
    t.add({ev.dataset, "mean", num(ev.p_star), num(ev.D.mean), num(ev.bias.mean), num(ev.accuracy.mean),
           num(ev.theoretical)});
    return t;
}

/// Test-set outcome of the original model and each mitigation in one run.
struct MitigationRun {
    BiasReport pre, parity, expert;
    std::optional<BiasReport> l1;
    double asymmetry = 0.0;
    Index alpha = 0, beta = 0;
    double lambda = 0.0;
};

/// One row of the mitigation table: means over runs.
struct ResultsRow {
    std::string dataset;
    double p_star = 0.0;
    double asymmetry = 0.0;
    double bias_pre = 0.0, bias_parity = 0.0, bias_expert = 0.0;
    std::optional<double> bias_l1;
    double acc_pre = 0.0, acc_parity = 0.0, acc_expert = 0.0;
    std::optional<double> acc_l1;
    std::size_t runs = 0;
    std::uint64_t seed = 0;
};

struct MitigationEvaluation {
    ResultsRow row;
    std::vector<MitigationRun> runs;
};

namespace detail {

struct MitigationInput {
    LinearModel model;
    LabeledDataset train;
    LabeledDataset test;
    std::optional<LabeledDataset> validation;
    bool native = true;  // false for imported slices: no l1 retraining
    const GaussianClassParams* params = nullptr;
};

inline MitigationRun mitigate_one(const ExperimentConfig& cfg, const MitigationInput& in, std::uint64_t shuffle_seed) {
    MitigationRun run;
    const Slice slice = in.native ? Slice::identity(in.model) : Slice::precomputed(in.model);
    const LabeledDataset& dist = cfg.influence_on == EvalSet::train ? in.train : in.test;
    const InfluenceVector infl = distributional_influence(slice, dist, cfg.influence_on == EvalSet::train ? "train" : "test");
    const Vector means = in.train.features.colwise().mean().transpose();

    // Orientation of the features themselves: true means when known, else training-set class means.
    run.asymmetry = in.params ? feature_asymmetry(*in.params) : feature_asymmetry(fit_gnb(in.train, cfg.variance_floor));
    run.pre = bias_amplification(in.model, in.test);
    run.parity = bias_amplification(feature_parity(in.model, infl, means, cfg.parity_adjustment), in.test);

    ExpertSearchOptions opts;
    opts.stride = cfg.expert_stride;
    if (in.validation) opts.validation = &*in.validation;
    const ExpertSelection ex = expert_search(in.model, infl, in.train, opts);
    run.expert = bias_amplification(ex.model, in.test);
    run.alpha = ex.alpha;
    run.beta = ex.beta;

    if (in.native) {
        SgdConfig sgd = cfg.sgd;
        sgd.shuffle_seed = shuffle_seed;
        const L1Selection l1 = l1_grid_baseline(in.train, sgd, cfg.lambda_grid);
        run.l1 = bias_amplification(l1.model, in.test);
        run.lambda = l1.lambda;
    }
    return run;
}

// Carves a validation set out of `train` when validation_fraction > 0.
inline std::pair<LabeledDataset, std::optional<LabeledDataset>> split_validation(const ExperimentConfig& cfg,
                                                                                 LabeledDataset train,
                                                                                 std::uint64_t seed) {
    if (cfg.validation_fraction <= 0.0) return {std::move(train), std::nullopt};
    Split s = stratified_split(train, cfg.validation_fraction, seed);
    return {std::move(s.train), std::move(s.test)};
}

inline LinearModel fit_sgd(const ExperimentConfig& cfg, const LabeledDataset& train, std::uint64_t shuffle_seed) {
    SgdConfig sgd = cfg.sgd;
    sgd.shuffle_seed = shuffle_seed;
    return train_sgd(train, sgd).model;
}

}  // namespace detail

/// Original model vs feature parity, class-wise experts and the l1 grid.
/// Sources: the asymmetric generator (fresh training and test sets per run),
/// a CSV dataset (one stratified split, a new SGD shuffle per run), or an
/// imported slice (slice_weights + dataset; a new split per run, no l1).
inline MitigationEvaluation mitigation_evaluation(const ExperimentConfig& cfg) {
    MitigationEvaluation ev;
    ev.runs.resize(cfg.runs);
    ev.row.dataset = detail::dataset_id(cfg.dataset);
    ev.row.runs = cfg.runs;
    ev.row.seed = cfg.master_seed;

    const bool has_slice = !cfg.slice_weights.empty();
    if (has_slice && cfg.dataset.empty()) throw Error("slice_weights requires dataset = <feature csv>");

    std::optional<GaussianClassParams> params;
    std::optional<LabeledDataset> data;
    std::optional<LinearModel> imported;
    std::optional<Split> fixed_split;
    if (cfg.dataset.empty()) {
        params = detail::generator(cfg, cfg.num_weak, cfg.weak_variance);
        ev.row.p_star = cfg.p;
    } else {
        if (has_slice) {
            SliceImport si = load_slice(cfg.slice_weights, cfg.dataset, detail::csv_options(cfg));
            imported = si.slice.g;
            data = std::move(si.data);
        } else {
            data = load_csv(cfg.dataset, detail::csv_options(cfg)).data;
            fixed_split = stratified_split(*data, cfg.test_fraction, substream_seed(cfg.master_seed, 0, 3));
            if (cfg.standardize) {
                const auto st = Standardizer::fit(fixed_split->train);
                fixed_split->train = st.apply(std::move(fixed_split->train));
                fixed_split->test = st.apply(std::move(fixed_split->test));
            }
        }
        ev.row.p_star = static_cast<double>(data->count_positive()) / static_cast<double>(data->size());
    }

    parallel_for(cfg.runs, [&](std::size_t r) {
        ev.runs[r] = detail::at_point("mitigation-eval run " + std::to_string(r), [&] {
            const RunSeeds seeds = run_seeds(cfg.master_seed, r);
            const std::uint64_t val_seed = substream_seed(cfg.master_seed, r, 4);
            detail::MitigationInput in;
            if (params) {
                auto [train, val] = detail::split_validation(cfg, sample_dataset(*params, cfg.n, seeds.data), val_seed);
                in.train = std::move(train);
                in.validation = std::move(val);
                in.test = sample_dataset(*params, cfg.test_n, seeds.test);
                in.model = detail::fit_sgd(cfg, in.train, seeds.shuffle);
                in.params = &*params;
            } else if (imported) {
                Split s = stratified_split(*data, cfg.test_fraction, substream_seed(cfg.master_seed, r, 3));
                auto [train, val] = detail::split_validation(cfg, std::move(s.train), val_seed);
                in.train = std::move(train);
                in.validation = std::move(val);
                in.test = std::move(s.test);
                in.model = *imported;
                in.native = false;
            } else {
                auto [train, val] = detail::split_validation(cfg, fixed_split->train, val_seed);
                in.train = std::move(train);
                in.validation = std::move(val);
                in.test = fixed_split->test;
                in.model = detail::fit_sgd(cfg, in.train, seeds.shuffle);
            }
            return detail::mitigate_one(cfg, in, seeds.shuffle);
        });
    });

    auto mean = [&](auto&& get) {
        double s = 0.0;
        for (const auto& run : ev.runs) s += get(run);
        return s / static_cast<double>(ev.runs.size());
    };
    ResultsRow& row = ev.row;
    row.asymmetry = mean([](const MitigationRun& m) { return m.asymmetry; });
    row.bias_pre = mean([](const MitigationRun& m) { return m.pre.bias; });
    row.bias_parity = mean([](const MitigationRun& m) { return m.parity.bias; });
    row.bias_expert = mean([](const MitigationRun& m) { return m.expert.bias; });
    row.acc_pre = mean([](const MitigationRun& m) { return m.pre.accuracy; });
    row.acc_parity = mean([](const MitigationRun& m) { return m.parity.accuracy; });
    row.acc_expert = mean([](const MitigationRun& m) { return m.expert.accuracy; });
    if (!has_slice) {
        row.bias_l1 = mean([](const MitigationRun& m) { return m.l1->bias; });
        row.acc_l1 = mean([](const MitigationRun& m) { return m.l1->accuracy; });
    }
    return ev;
}

inline Table mitigation_eval(const ExperimentConfig& cfg) {
    using detail::num;
    const ResultsRow r = mitigation_evaluation(cfg).row;
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); };
    Table t{{"dataset", "p_star", "asymmetry", "bias_pre", "bias_parity", "bias_expert", "bias_l1", "acc_pre",
             "acc_parity", "acc_expert", "acc_l1", "runs", "seed"},
            {}};
    t.add({r.dataset, num(r.p_star), num(r.asymmetry), num(r.bias_pre), num(r.bias_parity), num(r.bias_expert),
           opt(r.bias_l1), num(r.acc_pre), num(r.acc_parity), num(r.acc_expert), opt(r.acc_l1), num(r.runs),
           std::to_string(r.seed)});
    return t;
}

inline Table run_table(const ExperimentConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case ExperimentKind::theory_curve: return theory_curve(cfg);
        case ExperimentKind::weak_sweep: return weak_sweep(cfg);
        case ExperimentKind::variance_sweep: return variance_sweep(cfg);
        case ExperimentKind::size_sweep: return size_sweep(cfg);
        case ExperimentKind::loss_comparison: return loss_comparison(cfg);
        case ExperimentKind::dataset_eval: return dataset_eval(cfg);
        case ExperimentKind::mitigation_eval: return mitigation_eval(cfg);
    }
    throw Error("unknown experiment kind");
}

/// Runs the experiment and writes the CSV to cfg.out (stdout when empty).
/// Returns the rendered text.
inline std::string run_experiment(const ExperimentConfig& cfg) {
    const std::string text = render(run_table(cfg), cfg);
    if (cfg.out.empty()) {
        std::cout << text << std::flush;
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f) throw Error("cannot write output file '" + cfg.out + "'");
        f << text;
        if (!f) throw Error("failed writing output file '" + cfg.out + "'");
    }
    return text;
}

}  // namespace biasamp::harness
