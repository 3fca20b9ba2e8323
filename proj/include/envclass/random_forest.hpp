#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "envclass/decision_tree.hpp"
#include "envclass/rng.hpp"

namespace envclass {

/// How each tree picks the features it may split on.
enum class FeatureSampling : std::uint8_t {
    PerSplit,         // fresh floor(sqrt(d)) subset at every node
    DisjointPerTree,  // the features are dealt once into n_trees fixed hands
};

inline std::string to_string(FeatureSampling s) {
    return s == FeatureSampling::PerSplit ? "split" : "disjoint";
}

inline FeatureSampling parse_feature_sampling(const std::string& s) {
    if (s == "split") return FeatureSampling::PerSplit;
    if (s == "disjoint") return FeatureSampling::DisjointPerTree;
    throw Error("unknown feature sampling '" + s + "' (expected split or disjoint)");
}

struct ForestConfig {
    size_t n_trees = 5;
    TreeConfig tree;
    FeatureSampling feature_sampling = FeatureSampling::PerSplit;
};

/// Bagged ensemble of Gini trees. Each tree trains on a bootstrap sample of
/// the full training set and, under the default per-split sampling, considers
/// floor(sqrt(d)) random features at every node; under disjoint sampling the
/// feature set is shuffled once and dealt round-robin so each tree owns a
/// fixed, non-overlapping hand. Tree seeds derive deterministically from the
/// forest seed, so a forest is a pure function of (data, config, seed).
class RandomForest {
public:
    RandomForest() = default;

    static RandomForest fit(const std::vector<std::vector<double>>& x,
                            const std::vector<size_t>& y, size_t n_classes,
                            const ForestConfig& config, std::uint64_t seed) {
        if (x.empty()) throw Error("forest fit: empty training set");
        if (config.n_trees == 0) throw Error("forest fit: n_trees must be positive");
        const size_t d = x[0].size();
        RandomForest f;
        f.n_classes_ = n_classes;
        f.mtry_ = static_cast<size_t>(std::floor(std::sqrt(static_cast<double>(d))));
        if (f.mtry_ == 0) f.mtry_ = 1;

        std::vector<std::vector<size_t>> hands;
        if (config.feature_sampling == FeatureSampling::DisjointPerTree) {
            if (d < config.n_trees) {
                throw Error("forest fit: disjoint feature sampling needs at least one feature "
                            "per tree (" +
                            std::to_string(d) + " features, " +
                            std::to_string(config.n_trees) + " trees)");
            }
            std::vector<size_t> order(d);
            for (size_t j = 0; j < d; ++j) order[j] = j;
            Rng deal_rng(derive_seed(seed, config.n_trees));
            deal_rng.shuffle(order);
            hands.resize(config.n_trees);
            for (size_t j = 0; j < d; ++j) hands[j % config.n_trees].push_back(order[j]);
        }

        const size_t n = x.size();
        std::vector<std::vector<double>> xb;
        std::vector<size_t> yb;
        for (size_t t = 0; t < config.n_trees; ++t) {
            Rng rng(derive_seed(seed, t));
            xb.clear();
            yb.clear();
            xb.reserve(n);
            yb.reserve(n);
            for (size_t i = 0; i < n; ++i) {
                size_t pick = rng.uniform_index(n);
                xb.push_back(x[pick]);
                yb.push_back(y[pick]);
            }
            if (hands.empty()) {
                f.trees_.push_back(
                    DecisionTree::fit_subsampled(xb, yb, n_classes, config.tree, rng, f.mtry_));
            } else {
                f.trees_.push_back(
                    DecisionTree::fit_restricted(xb, yb, n_classes, config.tree, hands[t]));
            }
        }
        return f;
    }

    size_t n_classes() const { return n_classes_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }

    /// Mean of the per-tree leaf probability vectors.
    std::vector<double> predict_proba(const std::vector<double>& x) const {
        std::vector<double> mean(n_classes_, 0.0);
        for (const auto& t : trees_) {
            std::vector<double> p = t.predict_proba(x);
            for (size_t k = 0; k < n_classes_; ++k) mean[k] += p[k];
        }
        for (double& v : mean) v /= static_cast<double>(trees_.size());
        return mean;
    }

    /// Majority vote over tree predictions. A vote tie falls back to the
    /// summed tree probabilities of the tied classes, then the lowest index.
    size_t predict(const std::vector<double>& x) const {
        std::vector<size_t> votes(n_classes_, 0);
        std::vector<double> summed(n_classes_, 0.0);
        for (const auto& t : trees_) {
            ++votes[t.predict(x)];
            std::vector<double> p = t.predict_proba(x);
            for (size_t k = 0; k < n_classes_; ++k) summed[k] += p[k];
        }
        size_t max_votes = 0;
        for (size_t v : votes) max_votes = std::max(max_votes, v);
        size_t best = n_classes_;
        for (size_t k = 0; k < n_classes_; ++k) {
            if (votes[k] != max_votes) continue;
            if (best == n_classes_ || summed[k] > summed[best]) best = k;
        }
        return best;
    }

    nlohmann::json to_json() const {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        return nlohmann::json{{"n_classes", n_classes_}, {"mtry", mtry_}, {"trees", trees}};
    }

    static RandomForest from_json(const nlohmann::json& j) {
        RandomForest f;
        f.n_classes_ = j.at("n_classes").get<size_t>();
        f.mtry_ = j.at("mtry").get<size_t>();
        for (const auto& jt : j.at("trees")) f.trees_.push_back(DecisionTree::from_json(jt));
        if (f.trees_.empty()) throw Error("forest JSON: empty tree list");
        return f;
    }

private:
    size_t n_classes_ = 0;
    size_t mtry_ = 0;
    std::vector<DecisionTree> trees_;
};

}  // namespace envclass
