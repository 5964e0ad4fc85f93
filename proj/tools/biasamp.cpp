#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "biasamp/biasamp.hpp"

namespace {

using namespace biasamp;
using namespace biasamp::harness;

struct CommonFlags {
    std::string config;
    std::optional<long long> seed;
    std::optional<long long> runs;
    std::string out;
    std::string label_col;
    std::string data;
    std::string weights;
    bool full_scale = false;
    std::vector<std::string> settings;
};

void add_common(CLI::App* sub, CommonFlags& f, bool experiment) {
    sub->add_option("--config", f.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Master seed");
    sub->add_option("--out", f.out, "Output path (default: stdout)");
    sub->add_option("--label-col", f.label_col, "Label column name or 0-based index (negative counts from the end)");
    sub->add_option("--data", f.data, "Dataset CSV path");
    sub->add_option("--set", f.settings, "Override a config key, as key=value");
    if (experiment) {
        sub->add_option("--runs", f.runs, "Number of runs");
        sub->add_option("--weights", f.weights, "Imported final-layer weights (mitigate)");
        sub->add_flag("--full-scale", f.full_scale, "Use 100 runs");
    }
}

void apply_overrides(ExperimentConfig& cfg, const CommonFlags& f) {
    for (const auto& kv : f.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
    }
    if (!f.data.empty()) cfg.dataset = f.data;
    if (!f.label_col.empty()) cfg.label_col = f.label_col;
    if (!f.weights.empty()) cfg.slice_weights = f.weights;
    if (f.full_scale) cfg.runs = 100;
    if (f.runs) apply_setting(cfg, "runs", std::to_string(*f.runs));
    if (f.seed) apply_setting(cfg, "seed", std::to_string(*f.seed));
    if (!f.out.empty()) cfg.out = f.out;
}

ExperimentConfig build_config(ExperimentKind kind, const CommonFlags& f) {
    ExperimentConfig cfg = f.config.empty() ? default_config(kind) : load_config(f.config, kind);
    apply_overrides(cfg, f);
    return cfg;
}

void export_model(const CommonFlags& f, const std::string& features_out) {
    ExperimentConfig cfg = build_config(ExperimentKind::mitigation_eval, f);
    if (cfg.dataset.empty()) throw Error("export-model requires --data <csv>");
    if (cfg.out.empty()) throw Error("export-model requires --out <model path>");
    cfg.sgd.validate();
    CsvOptions opts;
    opts.label = parse_label_column(cfg.label_col);
    opts.orient_majority_positive = cfg.orient_majority;
    CsvDataset csv = load_csv(cfg.dataset, opts);
    if (cfg.standardize) csv.data = Standardizer::fit(csv.data).apply(std::move(csv.data));
    SgdConfig sgd = cfg.sgd;
    sgd.shuffle_seed = cfg.master_seed;
    const TrainedRun run = train_sgd(csv.data, sgd);
    write_model(cfg.out, run.model);
    if (!features_out.empty()) {
        std::ofstream out(features_out, std::ios::binary);
        if (!out) throw Error("cannot write '" + features_out + "'");
        write_dataset_csv(out, csv.data, csv.feature_names);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bias amplification experiments for linear classifiers"};
    app.require_subcommand(1);

    struct Entry {
        const char* name;
        ExperimentKind kind;
        const char* help;
    };
    const Entry entries[] = {
        {"theory-curve", ExperimentKind::theory_curve, "Closed-form Bayes-optimal bias over (p*, D)"},
        {"weak-sweep", ExperimentKind::weak_sweep, "Predicted-positive rate vs number of weak features"},
        {"variance-sweep", ExperimentKind::variance_sweep, "Predicted-positive rate vs weak-feature variance"},
        {"size-sweep", ExperimentKind::size_sweep, "Weak-coefficient overestimation vs training-set size"},
        {"loss-compare", ExperimentKind::loss_comparison, "Systematic bias per SGD loss"},
        {"gnb-eval", ExperimentKind::dataset_eval, "Gaussian naive Bayes bias on a CSV dataset"},
        {"mitigate", ExperimentKind::mitigation_eval, "Feature parity, experts and l1 baseline"},
    };

    std::vector<CommonFlags> flags(std::size(entries) + 1);
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(entries); ++i) {
        auto* sub = app.add_subcommand(entries[i].name, entries[i].help);
        add_common(sub, flags[i], true);
        subs.push_back(sub);
    }
    std::string features_out;
    CommonFlags& export_flags = flags.back();
    auto* exp = app.add_subcommand("export-model", "Train SGD on a CSV dataset and write the model file");
    add_common(exp, export_flags, false);
    exp->add_option("--features-out", features_out, "Also write the (oriented, standardized) feature CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.get_exit_code() ? e.get_exit_code() : 2;
    }

    try {
        if (exp->parsed()) {
            export_model(export_flags, features_out);
            return 0;
        }
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            run_experiment(build_config(entries[i].kind, flags[i]));
            return 0;
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n') c = ' ';
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
