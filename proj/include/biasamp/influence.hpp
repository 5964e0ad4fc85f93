#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "biasamp/core.hpp"

namespace biasamp {

enum class FeatureSource { identity, precomputed };

/// h = g o f with f either the identity (native features) or frozen and
/// precomputed (rows of the dataset are f(x0)). g is a linear final layer.
struct Slice {
    FeatureSource source = FeatureSource::identity;
    LinearModel g;

    Index feature_dim() const { return g.dim(); }

    static Slice identity(LinearModel g) { return {FeatureSource::identity, std::move(g)}; }
    static Slice precomputed(LinearModel g) { return {FeatureSource::precomputed, std::move(g)}; }
};

/// Per-feature influence chi_j over a distribution of interest.
struct InfluenceVector {
    Vector values;
    std::string distribution_id;

    Index size() const { return values.size(); }
};

/// Gradient of the logit g(z) = w.z + b with respect to the slice features.
template <class Row>
Vector logit_gradient(const LinearModel& g, const Row& /*z*/) {
    return g.weights;
}

/// chi_j = E_{x ~ P}[ d g / d f(x)_j ] with P the empirical distribution of
/// `data` and g the pre-threshold logit. The logit gradient is the same
/// vector at every point, so the average is the weight vector exactly.
inline InfluenceVector distributional_influence(const Slice& slice, const LabeledDataset& data,
                                                std::string_view distribution_id = "train") {
    if (data.dim() != slice.feature_dim())
        throw Error("dimension mismatch: slice has " + std::to_string(slice.feature_dim()) +
                    " features, data has " + std::to_string(data.dim()));
    if (data.size() < 1) throw Error("distribution of interest is empty");
    InfluenceVector out;
    out.values = logit_gradient(slice.g, data.row(0));
    out.distribution_id = std::string(distribution_id);
    if (!out.values.allFinite()) throw Error("influence values must be finite");
    return out;
}

struct RankedFeatures {
    std::vector<Index> positive;  // by descending influence
    std::vector<Index> negative;  // by ascending (most negative first) influence
};

/// Ties are broken by ascending feature index; zero-influence features are
/// in neither list.
inline RankedFeatures rank_features(const InfluenceVector& infl) {
    RankedFeatures r;
    for (Index j = 0; j < infl.size(); ++j) {
        if (infl.values[j] > 0.0) r.positive.push_back(j);
        else if (infl.values[j] < 0.0) r.negative.push_back(j);
    }
    const Vector& v = infl.values;
    std::stable_sort(r.positive.begin(), r.positive.end(), [&](Index a, Index b) { return v[a] > v[b]; });
    std::stable_sort(r.negative.begin(), r.negative.end(), [&](Index a, Index b) { return v[a] < v[b]; });
    return r;
}

}  // namespace biasamp
