#pragma once

// Flat key = value experiment configuration. '#' starts a comment, lists are
// comma separated, and numeric lists also accept an inclusive range
// `start:stop:step`.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/harness/io.hpp"
#include "biasamp/mitigate.hpp"
#include "biasamp/sgdtrain.hpp"

namespace biasamp::harness {

enum class ExperimentKind {
    theory_curve,
    weak_sweep,
    variance_sweep,
    size_sweep,
    loss_comparison,
    dataset_eval,
    mitigation_eval,
};

inline constexpr ExperimentKind kAllKinds[] = {
    ExperimentKind::theory_curve,    ExperimentKind::weak_sweep,   ExperimentKind::variance_sweep,
    ExperimentKind::size_sweep,      ExperimentKind::loss_comparison, ExperimentKind::dataset_eval,
    ExperimentKind::mitigation_eval,
};

inline std::string_view to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::theory_curve: return "theory-curve";
        case ExperimentKind::weak_sweep: return "weak-sweep";
        case ExperimentKind::variance_sweep: return "variance-sweep";
        case ExperimentKind::size_sweep: return "size-sweep";
        case ExperimentKind::loss_comparison: return "loss-comparison";
        case ExperimentKind::dataset_eval: return "dataset-eval";
        case ExperimentKind::mitigation_eval: return "mitigation-eval";
    }
    return "unknown";
}

inline ExperimentKind parse_kind(std::string_view s) {
    for (auto k : kAllKinds)
        if (to_string(k) == s) return k;
    throw Error("unknown experiment kind '" + std::string(s) + "'");
}

enum class EvalSet { test, train };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::theory_curve;

    // Synthetic generator (asymmetric regime); variances, not std devs.
    Index n = 100;
    std::vector<Index> n_list{100, 500, 1000};
    Index num_weak = 1000;
    std::vector<Index> num_weak_list;
    double strong_variance = 1.0;
    double weak_variance = 3.0;
    std::vector<double> weak_variance_list;
    double p = 0.5;
    Index test_n = 5000;
    EvalSet eval_on = EvalSet::test;

    // theory-curve
    std::vector<double> p_list;
    std::vector<double> d_list{0.25, 1.0, 2.0};

    // Dataset input (dataset-eval, mitigation-eval, export-model)
    std::string dataset;
    std::string label_col = "-1";
    bool standardize = false;
    bool orient_majority = true;
    std::string slice_weights;
    double variance_floor = kDefaultVarianceFloor;

    SgdConfig sgd;
    std::vector<Loss> losses;

    // mitigation-eval
    std::vector<double> lambda_grid{0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
    EvalSet influence_on = EvalSet::train;
    ParityAdjustment parity_adjustment = ParityAdjustment::subtract;
    Index expert_stride = 0;  // 0 = auto
    double validation_fraction = 0.0;

    std::size_t runs = 20;
    double test_fraction = 0.25;
    std::uint64_t master_seed = 0;
    std::string out;

    void validate() const {
        if (runs < 1) throw Error("runs must be >= 1");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must lie in (0, 1)");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw Error("validation_fraction must lie in [0, 1)");
        if (test_n < 1) throw Error("test_n must be >= 1");
        if (expert_stride < 0) throw Error("expert_stride must be >= 0");
        sgd.validate();
        if (!dataset.empty()) {
            std::ifstream f(dataset);
            if (!f) throw Error("dataset file '" + dataset + "' does not exist");
        }
        if (!slice_weights.empty()) {
            std::ifstream f(slice_weights);
            if (!f) throw Error("slice weights file '" + slice_weights + "' does not exist");
        }
    }
};

inline std::vector<double> linspace_inclusive(double start, double stop, double step) {
    if (!(step > 0.0)) throw Error("range step must be positive");
    std::vector<double> v;
    for (long long k = 0;; ++k) {
        const double x = start + static_cast<double>(k) * step;
        if (x > stop + 1e-9 * step) break;
        v.push_back(x);
    }
    return v;
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.emplace_back(trim(cur));
    return out;
}

inline std::vector<double> parse_real_list(std::string_view key, std::string_view s) {
    if (s.find(':') != std::string_view::npos) {
        std::vector<double> parts;
        std::string_view rest = s;
        while (true) {
            const auto pos = rest.find(':');
            const auto v = parse_double(rest.substr(0, pos));
            if (!v) throw Error("bad range for '" + std::string(key) + "': " + std::string(s));
            parts.push_back(*v);
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (parts.size() != 3) throw Error("range for '" + std::string(key) + "' must be start:stop:step");
        return linspace_inclusive(parts[0], parts[1], parts[2]);
    }
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        const auto v = parse_double(item);
        if (!v) throw Error("bad number '" + item + "' in '" + std::string(key) + "'");
        out.push_back(*v);
    }
    return out;
}

inline std::vector<Index> parse_index_list(std::string_view key, std::string_view s) {
    std::vector<Index> out;
    for (double v : parse_real_list(key, s)) {
        if (v < 0 || v != std::floor(v)) throw Error("'" + std::string(key) + "' must list non-negative integers");
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

namespace detail {
inline double real_value(const std::string& key, const std::string& v) {
    const auto d = parse_double(v);
    if (!d) throw Error("'" + key + "' expects a number, got '" + v + "'");
    return *d;
}
inline long long int_value(const std::string& key, const std::string& v) {
    const auto d = parse_integer(v);
    if (!d) throw Error("'" + key + "' expects an integer, got '" + v + "'");
    return *d;
}
inline bool bool_value(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("'" + key + "' expects true/false, got '" + v + "'");
}
inline EvalSet eval_value(const std::string& key, const std::string& v) {
    if (v == "test") return EvalSet::test;
    if (v == "train") return EvalSet::train;
    throw Error("'" + key + "' expects train or test, got '" + v + "'");
}
}  // namespace detail

/// Applies one key = value assignment. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "kind") cfg.kind = parse_kind(value);
    else if (key == "n") cfg.n = int_value(key, value);
    else if (key == "n_list") cfg.n_list = parse_index_list(key, value);
    else if (key == "num_weak") cfg.num_weak = int_value(key, value);
    else if (key == "num_weak_list") cfg.num_weak_list = parse_index_list(key, value);
    else if (key == "strong_variance") cfg.strong_variance = real_value(key, value);
    else if (key == "weak_variance") cfg.weak_variance = real_value(key, value);
    else if (key == "weak_variance_list") cfg.weak_variance_list = parse_real_list(key, value);
    else if (key == "p") cfg.p = real_value(key, value);
    else if (key == "test_n") cfg.test_n = int_value(key, value);
    else if (key == "eval_on") cfg.eval_on = eval_value(key, value);
    else if (key == "p_list") cfg.p_list = parse_real_list(key, value);
    else if (key == "d_list") cfg.d_list = parse_real_list(key, value);
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "label_col") cfg.label_col = value;
    else if (key == "standardize") cfg.standardize = bool_value(key, value);
    else if (key == "orient_majority") cfg.orient_majority = bool_value(key, value);
    else if (key == "slice_weights") cfg.slice_weights = value;
    else if (key == "variance_floor") cfg.variance_floor = real_value(key, value);
    else if (key == "loss") cfg.sgd.loss = parse_loss(value);
    else if (key == "losses") {
        cfg.losses.clear();
        for (const auto& s : split_list(value)) cfg.losses.push_back(parse_loss(s));
    }
    else if (key == "epochs") cfg.sgd.epochs = static_cast<int>(int_value(key, value));
    else if (key == "eta0") cfg.sgd.eta0 = real_value(key, value);
    else if (key == "schedule") cfg.sgd.schedule = parse_schedule(value);
    else if (key == "power_t") cfg.sgd.power_t = real_value(key, value);
    else if (key == "l1_lambda") cfg.sgd.l1_lambda = real_value(key, value);
    else if (key == "init") {
        if (value != "zeros") throw Error("only init = zeros is supported");
    }
    else if (key == "lambda_grid") cfg.lambda_grid = parse_real_list(key, value);
    else if (key == "influence_on") cfg.influence_on = eval_value(key, value);
    else if (key == "parity_adjustment") cfg.parity_adjustment = parse_parity_adjustment(value);
    else if (key == "expert_stride") cfg.expert_stride = int_value(key, value);
    else if (key == "validation_fraction") cfg.validation_fraction = real_value(key, value);
    else if (key == "runs") {
        const auto r = int_value(key, value);
        if (r < 1) throw Error("runs must be >= 1");
        cfg.runs = static_cast<std::size_t>(r);
    }
    else if (key == "test_fraction") cfg.test_fraction = real_value(key, value);
    else if (key == "seed") {
        const auto s = int_value(key, value);
        cfg.master_seed = static_cast<std::uint64_t>(s);
    }
    else if (key == "out") cfg.out = value;
    else throw Error("unknown config key '" + key + "'");
}

/// Per-kind defaults.
inline ExperimentConfig default_config(ExperimentKind kind) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    switch (kind) {
        case ExperimentKind::theory_curve:
            cfg.p_list = linspace_inclusive(0.5, 0.99, 0.01);
            break;
        case ExperimentKind::weak_sweep:
            cfg.weak_variance = 10.0;
            cfg.n_list = {100, 1000};
            cfg.num_weak_list = parse_index_list("num_weak_list", "0:490:10");
            break;
        case ExperimentKind::variance_sweep:
            cfg.num_weak = 254;
            cfg.n_list = {100, 1000};
            cfg.weak_variance_list = {0.01, 0.25, 1, 2.25, 4, 6.25, 9, 12.25, 16, 20.25, 25, 36, 49, 64, 81, 98.01};
            break;
        case ExperimentKind::size_sweep:
            cfg.num_weak = 50;
            cfg.n_list = parse_index_list("n_list", "100:1000:100");
            cfg.weak_variance_list = {9.0, 16.0, 25.0};
            break;
        case ExperimentKind::loss_comparison:
            cfg.weak_variance = 10.0;
            cfg.num_weak_list = parse_index_list("num_weak_list", "10:510:50");
            cfg.sgd.eta0 = 0.01;
            cfg.losses = {Loss::logistic, Loss::hinge, Loss::squared_hinge, Loss::modified_huber, Loss::perceptron};
            break;
        case ExperimentKind::dataset_eval:
            break;
        case ExperimentKind::mitigation_eval:
            cfg.num_weak = 1000;
            cfg.weak_variance = 3.0;
            cfg.n = 100;
            break;
    }
    return cfg;
}

/// Parses `key = value` lines on top of `cfg`.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in, std::string_view source = "<config>") {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view t = line;
        if (const auto hash = t.find('#'); hash != std::string_view::npos) t = t.substr(0, hash);
        t = trim(t);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw Error(std::string(source) + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key(trim(t.substr(0, eq)));
        const std::string value(trim(t.substr(eq + 1)));
        try {
            apply_setting(cfg, key, value);
        } catch (const Error& e) {
            throw Error(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

/// Reads the `kind` key of a config file, if any.
inline std::optional<ExperimentKind> peek_kind(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
        std::string_view t = line;
        if (const auto hash = t.find('#'); hash != std::string_view::npos) t = t.substr(0, hash);
        const auto eq = t.find('=');
        if (eq != std::string_view::npos && trim(t.substr(0, eq)) == "kind") return parse_kind(trim(t.substr(eq + 1)));
    }
    return std::nullopt;
}

inline ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> expected = std::nullopt) {
    const auto declared = peek_kind(path);
    if (expected && declared && *declared != *expected)
        throw Error("config '" + path + "' declares kind " + std::string(to_string(*declared)) + ", expected " +
                    std::string(to_string(*expected)));
    const ExperimentKind kind = expected ? *expected : declared.value_or(ExperimentKind::theory_curve);
    ExperimentConfig cfg = default_config(kind);
    std::ifstream in(path);
    apply_config_text(cfg, in, path);
    cfg.kind = kind;
    return cfg;
}

namespace detail {
template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}
}  // namespace detail

/// Canonical `key=value` listing of every effective setting except `out`;
/// this is what the config hash covers.
inline std::string canonical_config(const ExperimentConfig& c) {
    using detail::join;
    auto real = [](double v) { return format_double(v); };
    auto idx = [](Index v) { return std::to_string(v); };
    std::map<std::string, std::string> kv{
        {"kind", std::string(to_string(c.kind))},
        {"n", std::to_string(c.n)},
        {"n_list", join(c.n_list, idx)},
        {"num_weak", std::to_string(c.num_weak)},
        {"num_weak_list", join(c.num_weak_list, idx)},
        {"strong_variance", real(c.strong_variance)},
        {"weak_variance", real(c.weak_variance)},
        {"weak_variance_list", join(c.weak_variance_list, real)},
        {"p", real(c.p)},
        {"test_n", std::to_string(c.test_n)},
        {"eval_on", c.eval_on == EvalSet::test ? "test" : "train"},
        {"p_list", join(c.p_list, real)},
        {"d_list", join(c.d_list, real)},
        {"dataset", c.dataset},
        {"label_col", c.label_col},
        {"standardize", c.standardize ? "true" : "false"},
        {"orient_majority", c.orient_majority ? "true" : "false"},
        {"slice_weights", c.slice_weights},
        {"variance_floor", real(c.variance_floor)},
        {"loss", std::string(to_string(c.sgd.loss))},
        {"losses", join(c.losses, [](Loss l) { return std::string(to_string(l)); })},
        {"epochs", std::to_string(c.sgd.epochs)},
        {"eta0", real(c.sgd.eta0)},
        {"schedule", std::string(to_string(c.sgd.schedule))},
        {"power_t", real(c.sgd.power_t)},
        {"l1_lambda", real(c.sgd.l1_lambda)},
        {"init", "zeros"},
        {"lambda_grid", join(c.lambda_grid, real)},
        {"influence_on", c.influence_on == EvalSet::test ? "test" : "train"},
        {"parity_adjustment", std::string(to_string(c.parity_adjustment))},
        {"expert_stride", std::to_string(c.expert_stride)},
        {"validation_fraction", real(c.validation_fraction)},
        {"runs", std::to_string(c.runs)},
        {"test_fraction", real(c.test_fraction)},
        {"seed", std::to_string(c.master_seed)},
    };
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_config(c))));
    return buf;
}

}  // namespace biasamp::harness
