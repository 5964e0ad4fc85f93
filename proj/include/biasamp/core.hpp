#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace biasamp {

using Vector = Eigen::VectorXd;
// Row-major so that per-example access in SGD and scoring is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// n x d real features with binary {0,1} labels.
struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;

    LabeledDataset() = default;
    LabeledDataset(Matrix x, std::vector<int> y) : features(std::move(x)), labels(std::move(y)) {
        validate();
    }

    Index size() const { return features.rows(); }
    Index dim() const { return features.cols(); }
    auto row(Index i) const { return features.row(i); }

    Index count_positive() const {
        Index k = 0;
        for (int y : labels) k += y;
        return k;
    }

    void validate() const {
        if (features.rows() < 1 || features.cols() < 1)
            throw Error("dataset must have at least one row and one column");
        if (static_cast<Index>(labels.size()) != features.rows())
            throw Error("label count does not match feature rows");
        for (int y : labels)
            if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
        if (!features.allFinite()) throw Error("dataset contains non-finite feature values");
    }

    LabeledDataset subset(const std::vector<Index>& rows) const {
        LabeledDataset out;
        out.features.resize(static_cast<Index>(rows.size()), dim());
        out.labels.resize(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            out.features.row(static_cast<Index>(k)) = features.row(rows[k]);
            out.labels[k] = labels[static_cast<std::size_t>(rows[k])];
        }
        return out;
    }
};

/// Linear classifier: score w.x + b, predicts 1 iff score > 0.
struct LinearModel {
    Vector weights;
    double bias = 0.0;

    Index dim() const { return weights.size(); }

    template <class Row>
    double score(const Row& x) const {
        return weights.dot(x) + bias;
    }

    template <class Row>
    int predict(const Row& x) const {
        return score(x) > 0.0 ? 1 : 0;
    }

    Vector scores(const Matrix& x) const {
        return (x * weights).array() + bias;
    }

    bool is_finite() const { return weights.allFinite() && std::isfinite(bias); }

    friend bool operator==(const LinearModel& a, const LinearModel& b) {
        return a.bias == b.bias && a.weights.size() == b.weights.size() &&
               (a.weights.array() == b.weights.array()).all();
    }
};

/// Derives an independent 64-bit seed for substream `index` of `master`.
/// Results depend only on (master, index, stream), never on scheduling.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace biasamp
