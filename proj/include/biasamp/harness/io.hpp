#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "biasamp/core.hpp"
#include "biasamp/influence.hpp"

namespace biasamp::harness {

// ---------------------------------------------------------------------------
// Number formatting / parsing

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
    s = trim(s);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// CSV

/// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.emplace_back(trim(cur));
    return out;
}

/// Label column chosen by header name or by 0-based index (negative counts
/// from the end, so -1 is the last column).
using LabelColumn = std::variant<std::string, long long>;

inline LabelColumn parse_label_column(std::string_view s) {
    if (auto i = parse_integer(s)) return *i;
    return std::string(trim(s));
}

struct CsvOptions {
    LabelColumn label = -1LL;
    // Flip labels when class 1 is the minority, so that p* >= 1/2.
    bool orient_majority_positive = false;
};

struct CsvDataset {
    LabeledDataset data;
    std::vector<std::string> feature_names;
    bool labels_flipped = false;
};

/// Reads a headed CSV. Lines that are empty or start with '#' are skipped.
/// Labels must be {0,1} or {-1,+1}; the latter maps -1 -> 0.
inline CsvDataset load_csv(std::istream& in, const CsvOptions& opts = {}, std::string_view source = "<stream>") {
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        header = split_csv_line(t);
        break;
    }
    if (header.empty()) throw Error(std::string(source) + ": missing header row");

    const long long ncols = static_cast<long long>(header.size());
    long long label_col = -1;
    if (const auto* idx = std::get_if<long long>(&opts.label)) {
        label_col = *idx < 0 ? ncols + *idx : *idx;
        if (label_col < 0 || label_col >= ncols)
            throw Error(std::string(source) + ": label column index " + std::to_string(*idx) + " out of range");
    } else {
        const auto& name = std::get<std::string>(opts.label);
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(std::string(source) + ": no column named '" + name + "'");
        label_col = it - header.begin();
    }
    if (ncols < 2) throw Error(std::string(source) + ": need at least one feature column and a label column");

    CsvDataset out;
    for (long long c = 0; c < ncols; ++c)
        if (c != label_col) out.feature_names.push_back(header[static_cast<std::size_t>(c)]);

    std::vector<double> values;
    std::vector<double> raw_labels;
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        ++data_row;
        const auto cells = split_csv_line(t);
        if (static_cast<long long>(cells.size()) != ncols)
            throw Error(std::string(source) + ": row " + std::to_string(data_row) + " (line " + std::to_string(line_no) + ") has " +
                        std::to_string(cells.size()) + " columns, expected " + std::to_string(ncols));
        for (long long c = 0; c < ncols; ++c) {
            const auto v = parse_double(cells[static_cast<std::size_t>(c)]);
            if (!v || !std::isfinite(*v))
                throw Error(std::string(source) + ": non-numeric cell at row " + std::to_string(data_row) + " (line " +
                            std::to_string(line_no) + "), column " + std::to_string(c + 1) + " ('" + header[static_cast<std::size_t>(c)] +
                            "'): '" + cells[static_cast<std::size_t>(c)] + "'");
            if (c == label_col)
                raw_labels.push_back(*v);
            else
                values.push_back(*v);
        }
    }
    const Index n = static_cast<Index>(raw_labels.size());
    if (n < 1) throw Error(std::string(source) + ": no data rows");

    std::set<double> distinct(raw_labels.begin(), raw_labels.end());
    const bool zero_one = std::all_of(distinct.begin(), distinct.end(), [](double v) { return v == 0.0 || v == 1.0; });
    const bool pm_one = std::all_of(distinct.begin(), distinct.end(), [](double v) { return v == -1.0 || v == 1.0; });
    if (!zero_one && !pm_one) {
        std::string list;
        for (double v : distinct) list += (list.empty() ? "" : ", ") + format_double(v);
        throw Error(std::string(source) + ": label column is not binary; distinct values: {" + list + "}");
    }

    const Index d = ncols - 1;
    out.data.features = Eigen::Map<const Matrix>(values.data(), n, d);
    out.data.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.data.labels[static_cast<std::size_t>(i)] = raw_labels[static_cast<std::size_t>(i)] == 1.0 ? 1 : 0;
    if (opts.orient_majority_positive && 2 * out.data.count_positive() < n) {
        for (int& y : out.data.labels) y = 1 - y;
        out.labels_flipped = true;
    }
    out.data.validate();
    return out;
}

inline CsvDataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return load_csv(in, opts, path);
}

/// Writes features plus a trailing `label` column, full precision.
inline void write_dataset_csv(std::ostream& out, const LabeledDataset& data,
                              const std::vector<std::string>& feature_names = {}) {
    for (Index j = 0; j < data.dim(); ++j)
        out << (feature_names.empty() ? "x" + std::to_string(j) : feature_names[static_cast<std::size_t>(j)]) << ',';
    out << "label\n";
    for (Index i = 0; i < data.size(); ++i) {
        for (Index j = 0; j < data.dim(); ++j) out << format_double(data.features(i, j)) << ',';
        out << data.labels[static_cast<std::size_t>(i)] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Per-feature standardization

struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const LabeledDataset& train) {
        Standardizer s;
        const double n = static_cast<double>(train.size());
        s.mean = train.features.colwise().mean().transpose();
        s.scale.resize(train.dim());
        for (Index j = 0; j < train.dim(); ++j) {
            const double var = (train.features.col(j).array() - s.mean[j]).square().sum() / n;
            s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    LabeledDataset apply(LabeledDataset data) const {
        if (data.dim() != mean.size()) throw Error("standardizer dimension mismatch");
        for (Index i = 0; i < data.size(); ++i)
            data.features.row(i) = (data.features.row(i) - mean.transpose()).cwiseQuotient(scale.transpose());
        return data;
    }
};

// ---------------------------------------------------------------------------
// Model persistence: line 1 = dimension d, then d weights one per line,
// then the bias; all values in shortest round-trip decimal.

inline void write_model(std::ostream& out, const LinearModel& model) {
    out << model.dim() << '\n';
    for (Index j = 0; j < model.dim(); ++j) out << format_double(model.weights[j]) << '\n';
    out << format_double(model.bias) << '\n';
}

inline void write_model(const std::string& path, const LinearModel& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_model(out, model);
}

/// Reads either the persistence format above or a bare list of d + 1 reals
/// (weights then bias). A file is taken to be in persistence format when its
/// first token is a plain non-negative integer equal to (token count - 2).
inline LinearModel read_model(std::istream& in, std::string_view source = "<stream>") {
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) {
        if (tok.front() == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        tokens.push_back(tok);
    }
    if (tokens.size() < 2) throw Error(std::string(source) + ": weights file needs at least one weight and a bias");
    std::size_t first = 0;
    const bool plain_int = std::all_of(tokens[0].begin(), tokens[0].end(), [](char c) { return c >= '0' && c <= '9'; });
    if (plain_int) {
        const auto d = parse_integer(tokens[0]);
        if (d && *d >= 1 && static_cast<std::size_t>(*d) + 2 == tokens.size()) first = 1;
    }
    LinearModel model;
    const Index d = static_cast<Index>(tokens.size() - first - 1);
    model.weights.resize(d);
    for (Index j = 0; j < d; ++j) {
        const auto v = parse_double(tokens[first + static_cast<std::size_t>(j)]);
        if (!v || !std::isfinite(*v)) throw Error(std::string(source) + ": bad weight '" + tokens[first + static_cast<std::size_t>(j)] + "'");
        model.weights[j] = *v;
    }
    const auto b = parse_double(tokens.back());
    if (!b || !std::isfinite(*b)) throw Error(std::string(source) + ": bad bias '" + tokens.back() + "'");
    model.bias = *b;
    return model;
}

inline LinearModel read_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_model(in, path);
}

struct SliceImport {
    Slice slice;
    LabeledDataset data;
};

/// Final layer from `weights_path` and the precomputed features f(x0) from
/// `features_path` (CSV with a label column).
inline SliceImport load_slice(const std::string& weights_path, const std::string& features_path,
                              const CsvOptions& opts = {}) {
    LinearModel g = read_model(weights_path);
    CsvDataset features = load_csv(features_path, opts);
    if (g.dim() != features.data.dim())
        throw Error("dimension mismatch: weights have " + std::to_string(g.dim()) + " entries, features file has " +
                    std::to_string(features.data.dim()) + " feature columns");
    return {Slice::precomputed(std::move(g)), std::move(features.data)};
}

// ---------------------------------------------------------------------------
// Stratified split

struct Split {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<Index> train_rows;
    std::vector<Index> test_rows;
};

/// Test-set size per class by largest-remainder apportionment of
/// round(test_fraction * n); remainders tie towards the lower class label.
inline std::array<Index, 2> stratified_test_counts(Index n0, Index n1, double test_fraction) {
    const std::array<Index, 2> sizes{n0, n1};
    const Index target = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n0 + n1)));
    std::array<Index, 2> counts{};
    std::array<double, 2> remainder{};
    Index assigned = 0;
    for (int c = 0; c < 2; ++c) {
        const double q = test_fraction * static_cast<double>(sizes[c]);
        counts[c] = static_cast<Index>(std::floor(q));
        remainder[c] = q - std::floor(q);
        assigned += counts[c];
    }
    for (Index left = target - assigned; left > 0; --left) {
        const int c = remainder[1] > remainder[0] ? 1 : 0;
        ++counts[c];
        remainder[c] = -1.0;
    }
    return counts;
}

inline Split stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must lie in (0, 1)");
    std::array<std::vector<Index>, 2> by_class;
    for (Index i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);
    const auto counts = stratified_test_counts(static_cast<Index>(by_class[0].size()),
                                               static_cast<Index>(by_class[1].size()), test_fraction);
    Split s;
    for (int c = 0; c < 2; ++c) {
        auto& rows = by_class[static_cast<std::size_t>(c)];
        const Index k = counts[static_cast<std::size_t>(c)];
        if (k < 1 || k >= static_cast<Index>(rows.size()))
            throw Error("class " + std::to_string(c) + " (" + std::to_string(rows.size()) +
                        " rows) is too small to appear in both train and test at test_fraction " +
                        format_double(test_fraction));
        std::mt19937_64 rng(substream_seed(seed, static_cast<std::uint64_t>(c)));
        std::shuffle(rows.begin(), rows.end(), rng);
        s.test_rows.insert(s.test_rows.end(), rows.begin(), rows.begin() + k);
        s.train_rows.insert(s.train_rows.end(), rows.begin() + k, rows.end());
    }
    std::sort(s.train_rows.begin(), s.train_rows.end());
    std::sort(s.test_rows.begin(), s.test_rows.end());
    s.train = data.subset(s.train_rows);
    s.test = data.subset(s.test_rows);
    return s;
}

}  // namespace biasamp::harness
