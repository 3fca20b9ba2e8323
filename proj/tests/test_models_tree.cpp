#include "envclass/decision_tree.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "envclass/random_forest.hpp"
#include "envclass/rng.hpp"

using namespace envclass;

namespace {

TEST(Gini, ExactValues) {
    EXPECT_DOUBLE_EQ(gini_impurity({10, 0}, 10), 0.0);
    EXPECT_DOUBLE_EQ(gini_impurity({5, 5}, 10), 0.5);
    EXPECT_DOUBLE_EQ(gini_impurity({2, 2, 2}, 6), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(gini_impurity({1, 3}, 4), 1.0 - (0.25 * 0.25 + 0.75 * 0.75));
    EXPECT_DOUBLE_EQ(gini_impurity({0, 0}, 0), 0.0);
}

TEST(DecisionTree, OneDimensionalSplit) {
    std::vector<std::vector<double>> x = {{0.0}, {1.0}, {2.0}, {3.0}};
    std::vector<size_t> y = {0, 0, 1, 1};
    DecisionTree t = DecisionTree::fit(x, y, 2, {10, 1});
    EXPECT_EQ(t.depth(), 1u);
    const auto& root = t.nodes()[0];
    ASSERT_FALSE(root.is_leaf);
    EXPECT_EQ(root.feature, 0u);
    EXPECT_DOUBLE_EQ(root.threshold, 1.5);
    EXPECT_EQ(t.predict({0.5}), 0u);
    EXPECT_EQ(t.predict({1.5}), 0u);  // boundary goes left
    EXPECT_EQ(t.predict({1.6}), 1u);
    EXPECT_EQ(t.predict({10.0}), 1u);
}

TEST(DecisionTree, DuplicateColumnsPickLowestFeature) {
    std::vector<std::vector<double>> x = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    std::vector<size_t> y = {0, 0, 1, 1};
    DecisionTree t = DecisionTree::fit(x, y, 2, {10, 1});
    ASSERT_FALSE(t.nodes()[0].is_leaf);
    EXPECT_EQ(t.nodes()[0].feature, 0u);
}

TEST(DecisionTree, RespectsDepthAndLeafSize) {
    Rng rng(23);
    std::vector<std::vector<double>> x;
    std::vector<size_t> y;
    for (int i = 0; i < 120; ++i) {
        x.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)});
        y.push_back(rng.uniform_index(3));
    }
    TreeConfig config{3, 7};
    DecisionTree t = DecisionTree::fit(x, y, 3, config);
    EXPECT_LE(t.depth(), 3u);
    for (const auto& node : t.nodes()) {
        if (!node.is_leaf) continue;
        std::int64_t total = 0;
        for (auto c : node.class_counts) total += c;
        if (t.nodes().size() > 1) {
            EXPECT_GE(total, 7);
        }
    }
}

TEST(DecisionTree, PureNodeStopsImmediately) {
    std::vector<std::vector<double>> x = {{0.0}, {1.0}, {2.0}};
    std::vector<size_t> y = {1, 1, 1};
    DecisionTree t = DecisionTree::fit(x, y, 2, {10, 1});
    EXPECT_EQ(t.nodes().size(), 1u);
    EXPECT_EQ(t.predict({5.0}), 1u);
}

TEST(DecisionTree, ProbabilitiesMatchLeafCounts) {
    std::vector<std::vector<double>> x = {{0.0}, {0.0}, {1.0}, {1.0}, {1.0}, {2.0}};
    std::vector<size_t> y = {0, 0, 0, 1, 1, 1};
    DecisionTree t = DecisionTree::fit(x, y, 2, {10, 1});
    std::vector<double> p = t.predict_proba({0.0});
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(DecisionTree, ArgmaxTieBreaksToLowestIndex) {
    nlohmann::json j = {{"n_features", 1},
                        {"n_classes", 3},
                        {"nodes", nlohmann::json::array({nlohmann::json{
                                      {"counts", std::vector<std::int64_t>{2, 5, 5}}}})}};
    DecisionTree t = DecisionTree::from_json(j);
    EXPECT_EQ(t.predict({0.0}), 1u);
    std::vector<double> p = t.predict_proba({0.0});
    EXPECT_DOUBLE_EQ(p[0], 2.0 / 12.0);
    EXPECT_DOUBLE_EQ(p[1], 5.0 / 12.0);
}

TEST(DecisionTree, FitValidation) {
    EXPECT_THROW(DecisionTree::fit({}, {}, 2, {}), Error);
    EXPECT_THROW(DecisionTree::fit({{1.0}}, {0, 1}, 2, {}), Error);
    EXPECT_THROW(DecisionTree::fit({{1.0}, {2.0, 3.0}}, {0, 0}, 2, {}), Error);
    EXPECT_THROW(DecisionTree::fit({{1.0}}, {5}, 2, {}), Error);
    DecisionTree t = DecisionTree::fit({{1.0, 2.0}}, {0}, 2, {});
    EXPECT_THROW(t.predict({1.0}), Error);
}

TEST(DecisionTree, JsonRoundTrip) {
    Rng rng(31);
    std::vector<std::vector<double>> x;
    std::vector<size_t> y;
    for (int i = 0; i < 60; ++i) {
        double a = rng.uniform(0, 4);
        double b = rng.uniform(0, 4);
        x.push_back({a, b});
        y.push_back(a + b > 4.0 ? 1u : 0u);
    }
    DecisionTree t = DecisionTree::fit(x, y, 2, {5, 2});
    DecisionTree back = DecisionTree::from_json(t.to_json());
    EXPECT_EQ(t.to_json(), back.to_json());
    for (int i = 0; i < 50; ++i) {
        std::vector<double> q = {rng.uniform(-1, 5), rng.uniform(-1, 5)};
        EXPECT_EQ(t.predict(q), back.predict(q));
        EXPECT_EQ(t.predict_proba(q), back.predict_proba(q));
    }
}

// ---------------------------------------------------------------------------
// Reference implementation: exhaustive recursive CART with the same contract
// (midpoint thresholds, strict Gini improvement, first-best tie handling).
// ---------------------------------------------------------------------------

struct RefNode {
    bool is_leaf = true;
    size_t feature = 0;
    double threshold = 0.0;
    std::unique_ptr<RefNode> left, right;
    std::vector<std::int64_t> counts;
};

double ref_gini(const std::vector<std::int64_t>& counts, std::int64_t n) {
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::int64_t c : counts) {
        double p = static_cast<double>(c) / static_cast<double>(n);
        s += p * p;
    }
    return 1.0 - s;
}

std::unique_ptr<RefNode> ref_grow(const std::vector<std::vector<double>>& x,
                                  const std::vector<size_t>& y, std::vector<size_t> idx,
                                  size_t depth, const TreeConfig& config, size_t n_classes) {
    auto node = std::make_unique<RefNode>();
    std::vector<std::int64_t> counts(n_classes, 0);
    for (size_t i : idx) ++counts[y[i]];
    const std::int64_t n = static_cast<std::int64_t>(idx.size());

    bool pure = std::any_of(counts.begin(), counts.end(),
                            [n](std::int64_t c) { return c == n; });
    bool found = false;
    size_t best_f = 0;
    double best_thr = 0.0;
    double best_g = ref_gini(counts, n);
    if (!pure && depth < config.max_depth && idx.size() >= 2 * config.min_samples_leaf) {
        size_t d = x[0].size();
        for (size_t f = 0; f < d; ++f) {
            std::vector<std::pair<double, size_t>> ordered;
            for (size_t i : idx) ordered.emplace_back(x[i][f], y[i]);
            std::sort(ordered.begin(), ordered.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (size_t cut = 1; cut < ordered.size(); ++cut) {
                if (ordered[cut - 1].first == ordered[cut].first) continue;
                std::int64_t nl = static_cast<std::int64_t>(cut);
                std::int64_t nr = n - nl;
                if (nl < static_cast<std::int64_t>(config.min_samples_leaf) ||
                    nr < static_cast<std::int64_t>(config.min_samples_leaf)) {
                    continue;
                }
                std::vector<std::int64_t> cl(n_classes, 0), cr(n_classes, 0);
                for (size_t i = 0; i < cut; ++i) ++cl[ordered[i].second];
                for (size_t k = 0; k < n_classes; ++k) cr[k] = counts[k] - cl[k];
                double g = (static_cast<double>(nl) * ref_gini(cl, nl) +
                            static_cast<double>(nr) * ref_gini(cr, nr)) /
                           static_cast<double>(n);
                if (g < best_g) {
                    found = true;
                    best_f = f;
                    best_thr = ordered[cut - 1].first +
                               (ordered[cut].first - ordered[cut - 1].first) / 2.0;
                    best_g = g;
                }
            }
        }
    }

    if (!found) {
        node->is_leaf = true;
        node->counts = std::move(counts);
        return node;
    }
    std::vector<size_t> li, ri;
    for (size_t i : idx) (x[i][best_f] <= best_thr ? li : ri).push_back(i);
    node->is_leaf = false;
    node->feature = best_f;
    node->threshold = best_thr;
    node->left = ref_grow(x, y, std::move(li), depth + 1, config, n_classes);
    node->right = ref_grow(x, y, std::move(ri), depth + 1, config, n_classes);
    return node;
}

void expect_same_tree(const DecisionTree& t, size_t node_index, const RefNode& ref,
                      const std::string& path) {
    const auto& n = t.nodes()[node_index];
    ASSERT_EQ(n.is_leaf, ref.is_leaf) << "at " << path;
    if (n.is_leaf) {
        EXPECT_EQ(n.class_counts, ref.counts) << "at " << path;
        return;
    }
    EXPECT_EQ(n.feature, ref.feature) << "at " << path;
    EXPECT_DOUBLE_EQ(n.threshold, ref.threshold) << "at " << path;
    expect_same_tree(t, static_cast<size_t>(n.left), *ref.left, path + "L");
    expect_same_tree(t, static_cast<size_t>(n.right), *ref.right, path + "R");
}

TEST(DecisionTree, MatchesReferenceOnRandomDatasets) {
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        size_t n = 6 + rng.uniform_index(9);
        size_t d = 1 + rng.uniform_index(3);
        size_t k = 2 + rng.uniform_index(2);
        std::vector<std::vector<double>> x;
        std::vector<size_t> y;
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> row(d);
            for (auto& v : row) v = static_cast<double>(rng.uniform_index(4));
            x.push_back(row);
            y.push_back(rng.uniform_index(k));
        }
        TreeConfig config{2, 1};
        DecisionTree t = DecisionTree::fit(x, y, k, config);
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i;
        auto ref = ref_grow(x, y, idx, 0, config, k);
        expect_same_tree(t, 0, *ref, "root");
    }
}

// ---------------------------------------------------------------------------
// Random forest.
// ---------------------------------------------------------------------------

TEST(RandomForest, DeterministicForSeed) {
    Rng rng(57);
    std::vector<std::vector<double>> x;
    std::vector<size_t> y;
    for (int i = 0; i < 100; ++i) {
        double a = rng.uniform(0, 1), b = rng.uniform(0, 1), c = rng.uniform(0, 1);
        x.push_back({a, b, c});
        y.push_back(a > 0.5 ? 1u : 0u);
    }
    ForestConfig config;
    config.tree.min_samples_leaf = 3;
    RandomForest f1 = RandomForest::fit(x, y, 2, config, 99);
    RandomForest f2 = RandomForest::fit(x, y, 2, config, 99);
    EXPECT_EQ(f1.to_json().dump(), f2.to_json().dump());
    RandomForest f3 = RandomForest::fit(x, y, 2, config, 100);
    EXPECT_NE(f1.to_json().dump(), f3.to_json().dump());
    EXPECT_EQ(f1.trees().size(), 5u);
}

TEST(RandomForest, LearnsSeparableData) {
    Rng rng(58);
    std::vector<std::vector<double>> x;
    std::vector<size_t> y;
    for (int i = 0; i < 150; ++i) {
        size_t cls = rng.uniform_index(3);
        double center = static_cast<double>(cls) * 10.0;
        x.push_back({center + rng.normal(0.0, 1.0), rng.uniform(0, 1)});
        y.push_back(cls);
    }
    ForestConfig config;
    config.tree.min_samples_leaf = 2;
    RandomForest f = RandomForest::fit(x, y, 3, config, 7);
    size_t correct = 0;
    for (size_t i = 0; i < x.size(); ++i) correct += f.predict(x[i]) == y[i] ? 1 : 0;
    EXPECT_GT(static_cast<double>(correct) / static_cast<double>(x.size()), 0.95);
    std::vector<double> p = f.predict_proba(x[0]);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

nlohmann::json leaf_tree(std::vector<std::int64_t> counts) {
    return nlohmann::json{
        {"n_features", 1},
        {"n_classes", counts.size()},
        {"nodes", nlohmann::json::array({nlohmann::json{{"counts", counts}}})}};
}

TEST(RandomForest, VoteTieFallsBackToSummedProbabilities) {
    nlohmann::json j = {{"n_classes", 2},
                        {"mtry", 1},
                        {"trees", nlohmann::json::array({
                                      leaf_tree({3, 1}),   // votes 0, p0 = .75
                                      leaf_tree({3, 1}),   // votes 0
                                      leaf_tree({0, 4}),   // votes 1, p1 = 1
                                      leaf_tree({1, 3}),   // votes 1
                                  })}};
    RandomForest f = RandomForest::from_json(j);
    // Votes split 2-2; summed probability favors class 1 (2.25 vs 1.75).
    EXPECT_EQ(f.predict({0.0}), 1u);
}

TEST(RandomForest, FullTieFallsBackToLowestIndex) {
    nlohmann::json j = {{"n_classes", 2},
                        {"mtry", 1},
                        {"trees", nlohmann::json::array({
                                      leaf_tree({1, 0}),
                                      leaf_tree({0, 1}),
                                  })}};
    RandomForest f = RandomForest::from_json(j);
    EXPECT_EQ(f.predict({0.0}), 0u);
}

TEST(RandomForest, JsonRoundTrip) {
    Rng rng(59);
    std::vector<std::vector<double>> x;
    std::vector<size_t> y;
    for (int i = 0; i < 80; ++i) {
        double a = rng.uniform(0, 1);
        x.push_back({a, rng.uniform(0, 1)});
        y.push_back(a > 0.4 ? 1u : 0u);
    }
    ForestConfig config;
    config.tree.min_samples_leaf = 2;
    RandomForest f = RandomForest::fit(x, y, 2, config, 3);
    RandomForest back = RandomForest::from_json(f.to_json());
    EXPECT_EQ(f.to_json(), back.to_json());
    for (int i = 0; i < 30; ++i) {
        std::vector<double> q = {rng.uniform(0, 1), rng.uniform(0, 1)};
        EXPECT_EQ(f.predict(q), back.predict(q));
    }
}

TEST(RandomForest, FitValidation) {
    EXPECT_THROW(RandomForest::fit({}, {}, 2, {}, 1), Error);
    ForestConfig zero;
    zero.n_trees = 0;
    EXPECT_THROW(RandomForest::fit({{1.0}}, {0}, 2, zero, 1), Error);
}

}  // namespace
