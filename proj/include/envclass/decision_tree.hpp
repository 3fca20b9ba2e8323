#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/error.hpp"
#include "envclass/rng.hpp"

namespace envclass {

/// Gini impurity of a class-count vector whose total is `n`.
inline double gini_impurity(const std::vector<std::int64_t>& counts, std::int64_t n) {
    if (n == 0) return 0.0;
    double sum_sq = 0.0;
    for (std::int64_t c : counts) {
        double p = static_cast<double>(c) / static_cast<double>(n);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

struct TreeConfig {
    size_t max_depth = 10;
    size_t min_samples_leaf = 10;
};

/// Binary CART classifier trained by exact greedy Gini search. Candidate
/// thresholds are midpoints between consecutive distinct feature values; a
/// sample goes left when value <= threshold. Ties between equally good splits
/// resolve to the lowest feature index, then the lowest threshold (the first
/// candidate found in scan order, since only strict improvements are taken).
class DecisionTree {
public:
    struct Node {
        bool is_leaf = true;
        size_t feature = 0;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        std::vector<std::int64_t> class_counts;
    };

    DecisionTree() = default;

    /// Trains on all features at every node.
    static DecisionTree fit(const std::vector<std::vector<double>>& x,
                            const std::vector<size_t>& y, size_t n_classes,
                            const TreeConfig& config) {
        return fit_impl(x, y, n_classes, config, nullptr, 0, {});
    }

    /// Trains with a fresh random feature subset of size `mtry` at every node
    /// (the random-forest regime). The subset is drawn from `rng` and scanned
    /// in ascending index order.
    static DecisionTree fit_subsampled(const std::vector<std::vector<double>>& x,
                                       const std::vector<size_t>& y, size_t n_classes,
                                       const TreeConfig& config, Rng& rng, size_t mtry) {
        return fit_impl(x, y, n_classes, config, &rng, mtry, {});
    }

    /// Trains considering only `features` at every node (the disjoint-subset
    /// forest regime). Indices must be in range and duplicate-free.
    static DecisionTree fit_restricted(const std::vector<std::vector<double>>& x,
                                       const std::vector<size_t>& y, size_t n_classes,
                                       const TreeConfig& config, std::vector<size_t> features) {
        if (features.empty()) throw Error("tree fit: empty feature subset");
        std::sort(features.begin(), features.end());
        if (std::adjacent_find(features.begin(), features.end()) != features.end()) {
            throw Error("tree fit: duplicate feature in subset");
        }
        return fit_impl(x, y, n_classes, config, nullptr, 0, std::move(features));
    }

    size_t n_classes() const { return n_classes_; }
    size_t n_features() const { return n_features_; }
    const std::vector<Node>& nodes() const { return nodes_; }

    size_t depth() const { return depth_of(0); }

    std::vector<double> predict_proba(const std::vector<double>& x) const {
        const Node& leaf = descend(x);
        std::vector<double> p(n_classes_, 0.0);
        std::int64_t total = 0;
        for (std::int64_t c : leaf.class_counts) total += c;
        for (size_t k = 0; k < n_classes_; ++k) {
            p[k] = static_cast<double>(leaf.class_counts[k]) / static_cast<double>(total);
        }
        return p;
    }

    size_t predict(const std::vector<double>& x) const {
        const Node& leaf = descend(x);
        size_t best = 0;
        for (size_t k = 1; k < leaf.class_counts.size(); ++k) {
            if (leaf.class_counts[k] > leaf.class_counts[best]) best = k;
        }
        return best;
    }

    nlohmann::json to_json() const {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : nodes_) {
            if (n.is_leaf) {
                nodes.push_back(nlohmann::json{{"counts", n.class_counts}});
            } else {
                nodes.push_back(nlohmann::json{{"feature", n.feature},
                                               {"threshold", n.threshold},
                                               {"left", n.left},
                                               {"right", n.right}});
            }
        }
        return nlohmann::json{
            {"n_features", n_features_}, {"n_classes", n_classes_}, {"nodes", nodes}};
    }

    static DecisionTree from_json(const nlohmann::json& j) {
        DecisionTree t;
        t.n_features_ = j.at("n_features").get<size_t>();
        t.n_classes_ = j.at("n_classes").get<size_t>();
        for (const auto& jn : j.at("nodes")) {
            Node n;
            if (jn.contains("counts")) {
                n.is_leaf = true;
                n.class_counts = jn.at("counts").get<std::vector<std::int64_t>>();
                if (n.class_counts.size() != t.n_classes_) {
                    throw Error("tree JSON: leaf count width does not match n_classes");
                }
            } else {
                n.is_leaf = false;
                n.feature = jn.at("feature").get<size_t>();
                n.threshold = jn.at("threshold").get<double>();
                n.left = jn.at("left").get<int>();
                n.right = jn.at("right").get<int>();
            }
            t.nodes_.push_back(std::move(n));
        }
        if (t.nodes_.empty()) throw Error("tree JSON: empty node list");
        return t;
    }

private:
    size_t n_features_ = 0;
    size_t n_classes_ = 0;
    std::vector<Node> nodes_;

    const Node& descend(const std::vector<double>& x) const {
        if (x.size() != n_features_) {
            throw Error("tree predict: expected " + std::to_string(n_features_) +
                        " features, got " + std::to_string(x.size()));
        }
        size_t i = 0;
        while (!nodes_[i].is_leaf) {
            i = x[nodes_[i].feature] <= nodes_[i].threshold
                    ? static_cast<size_t>(nodes_[i].left)
                    : static_cast<size_t>(nodes_[i].right);
        }
        return nodes_[i];
    }

    size_t depth_of(size_t i) const {
        const Node& n = nodes_[i];
        if (n.is_leaf) return 0;
        return 1 + std::max(depth_of(static_cast<size_t>(n.left)),
                            depth_of(static_cast<size_t>(n.right)));
    }

    struct SplitChoice {
        bool found = false;
        size_t feature = 0;
        double threshold = 0.0;
        double weighted_gini = 0.0;
    };

    static SplitChoice best_split(const std::vector<std::vector<double>>& x,
                                  const std::vector<size_t>& y,
                                  const std::vector<size_t>& indices,
                                  const std::vector<std::int64_t>& node_counts, size_t n_classes,
                                  const std::vector<size_t>& features,
                                  size_t min_samples_leaf) {
        const std::int64_t n = static_cast<std::int64_t>(indices.size());
        SplitChoice best;
        best.weighted_gini = gini_impurity(node_counts, n);

        std::vector<std::pair<double, size_t>> ordered(indices.size());
        std::vector<std::int64_t> left_counts(n_classes);
        for (size_t f : features) {
            for (size_t i = 0; i < indices.size(); ++i) {
                ordered[i] = {x[indices[i]][f], y[indices[i]]};
            }
            std::sort(ordered.begin(), ordered.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            std::fill(left_counts.begin(), left_counts.end(), 0);
            std::int64_t n_left = 0;
            for (size_t i = 0; i + 1 < ordered.size(); ++i) {
                ++left_counts[ordered[i].second];
                ++n_left;
                if (ordered[i].first == ordered[i + 1].first) continue;
                std::int64_t n_right = n - n_left;
                if (n_left < static_cast<std::int64_t>(min_samples_leaf) ||
                    n_right < static_cast<std::int64_t>(min_samples_leaf)) {
                    continue;
                }
                double g_left = gini_impurity(left_counts, n_left);
                double sum_sq_right = 0.0;
                for (size_t k = 0; k < n_classes; ++k) {
                    double p = static_cast<double>(node_counts[k] - left_counts[k]) /
                               static_cast<double>(n_right);
                    sum_sq_right += p * p;
                }
                double g_right = 1.0 - sum_sq_right;
                double weighted = (static_cast<double>(n_left) * g_left +
                                   static_cast<double>(n_right) * g_right) /
                                  static_cast<double>(n);
                if (weighted < best.weighted_gini) {
                    best.found = true;
                    best.feature = f;
                    best.threshold =
                        ordered[i].first + (ordered[i + 1].first - ordered[i].first) / 2.0;
                    best.weighted_gini = weighted;
                }
            }
        }
        return best;
    }

    static DecisionTree fit_impl(const std::vector<std::vector<double>>& x,
                                 const std::vector<size_t>& y, size_t n_classes,
                                 const TreeConfig& config, Rng* rng, size_t mtry,
                                 std::vector<size_t> pool) {
        if (x.empty()) throw Error("tree fit: empty training set");
        if (x.size() != y.size()) throw Error("tree fit: feature/label row count mismatch");
        if (n_classes == 0) throw Error("tree fit: n_classes must be positive");
        DecisionTree t;
        t.n_features_ = x[0].size();
        t.n_classes_ = n_classes;
        for (size_t i = 0; i < x.size(); ++i) {
            if (x[i].size() != t.n_features_) throw Error("tree fit: ragged feature rows");
            if (y[i] >= n_classes) throw Error("tree fit: label out of range");
        }
        if (pool.empty()) {
            pool.resize(t.n_features_);
            for (size_t f = 0; f < t.n_features_; ++f) pool[f] = f;
        } else if (pool.back() >= t.n_features_) {
            throw Error("tree fit: feature subset index out of range");
        }

        std::vector<size_t> root(x.size());
        for (size_t i = 0; i < x.size(); ++i) root[i] = i;
        t.grow(x, y, std::move(root), 0, config, rng, mtry, pool);
        return t;
    }

    /// Appends the subtree for `indices` and returns its node index.
    int grow(const std::vector<std::vector<double>>& x, const std::vector<size_t>& y,
             std::vector<size_t> indices, size_t depth, const TreeConfig& config, Rng* rng,
             size_t mtry, const std::vector<size_t>& feature_pool) {
        std::vector<std::int64_t> counts(n_classes_, 0);
        for (size_t i : indices) ++counts[y[i]];
        const std::int64_t n = static_cast<std::int64_t>(indices.size());

        bool pure = false;
        for (std::int64_t c : counts) {
            if (c == n) {
                pure = true;
                break;
            }
        }
        bool can_split = !pure && depth < config.max_depth &&
                         indices.size() >= 2 * config.min_samples_leaf;

        SplitChoice split;
        if (can_split) {
            if (rng && mtry < n_features_) {
                std::vector<size_t> subset = rng->sample_without_replacement(n_features_, mtry);
                std::sort(subset.begin(), subset.end());
                split = best_split(x, y, indices, counts, n_classes_, subset,
                                   config.min_samples_leaf);
            } else {
                split = best_split(x, y, indices, counts, n_classes_, feature_pool,
                                   config.min_samples_leaf);
            }
        }

        int node_index = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        if (!split.found) {
            nodes_[node_index].is_leaf = true;
            nodes_[node_index].class_counts = std::move(counts);
            return node_index;
        }

        std::vector<size_t> left_idx, right_idx;
        for (size_t i : indices) {
            (x[i][split.feature] <= split.threshold ? left_idx : right_idx).push_back(i);
        }
        indices.clear();
        indices.shrink_to_fit();
        int left = grow(x, y, std::move(left_idx), depth + 1, config, rng, mtry, feature_pool);
        int right = grow(x, y, std::move(right_idx), depth + 1, config, rng, mtry, feature_pool);
        nodes_[node_index].is_leaf = false;
        nodes_[node_index].feature = split.feature;
        nodes_[node_index].threshold = split.threshold;
        nodes_[node_index].left = left;
        nodes_[node_index].right = right;
        return node_index;
    }
};

}  // namespace envclass
