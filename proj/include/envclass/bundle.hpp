#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "envclass/decision_tree.hpp"
#include "envclass/dnn.hpp"
#include "envclass/features.hpp"
#include "envclass/random_forest.hpp"
#include "envclass/util.hpp"

namespace envclass {

inline constexpr const char* kBundleMagic = "ENVCLASS-BUNDLE";
inline constexpr int kBundleFormatVersion = 1;

/// How a bundle's model was trained, kept for reproducibility audits.
struct TrainingProvenance {
    std::uint64_t seed = 0;
    nlohmann::json model_config;  // hyperparameters in effect
    std::string dataset_fingerprint;
    nlohmann::json split;  // fractions, granularity, and split seed

    nlohmann::json to_json() const {
        return nlohmann::json{{"seed", seed},
                              {"config", model_config},
                              {"dataset_fingerprint", dataset_fingerprint},
                              {"split", split}};
    }

    static TrainingProvenance from_json(const nlohmann::json& j) {
        TrainingProvenance t;
        t.seed = j.at("seed").get<std::uint64_t>();
        t.model_config = j.at("config");
        t.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
        t.split = j.at("split");
        return t;
    }
};

/// A trained model plus everything needed to run it on raw feature vectors:
/// the feature layout, the train-split normalizer, and the class names.
/// Serialized as checksummed JSON.
class ModelBundle {
public:
    using Model = std::variant<DecisionTree, RandomForest, Mlp>;

    std::string layout_name;
    std::vector<std::string> class_names;
    MinMaxNormalizer normalizer;
    Model model;
    TrainingProvenance training;

    std::string model_kind() const {
        if (std::holds_alternative<DecisionTree>(model)) return "tree";
        if (std::holds_alternative<RandomForest>(model)) return "forest";
        return "dnn";
    }

    size_t n_classes() const { return class_names.size(); }

    const FeatureLayout& feature_layout() const { return layout_by_name(layout_name); }

    /// Classify a raw (unnormalized) feature vector.
    size_t predict(const std::vector<double>& raw) const {
        std::vector<double> x = normalizer.apply(raw);
        if (const auto* t = std::get_if<DecisionTree>(&model)) return t->predict(x);
        if (const auto* f = std::get_if<RandomForest>(&model)) return f->predict(x);
        return std::get<Mlp>(model).predict(x);
    }

    std::vector<double> predict_proba(const std::vector<double>& raw) const {
        std::vector<double> x = normalizer.apply(raw);
        if (const auto* t = std::get_if<DecisionTree>(&model)) return t->predict_proba(x);
        if (const auto* f = std::get_if<RandomForest>(&model)) return f->predict_proba(x);
        return std::get<Mlp>(model).forward(x);
    }

    nlohmann::json to_json() const {
        nlohmann::json model_json;
        if (const auto* t = std::get_if<DecisionTree>(&model)) model_json = t->to_json();
        else if (const auto* f = std::get_if<RandomForest>(&model)) model_json = f->to_json();
        else model_json = std::get<Mlp>(model).to_json();
        nlohmann::json j{{"magic", kBundleMagic},
                         {"format_version", kBundleFormatVersion},
                         {"model_kind", model_kind()},
                         {"layout", layout_name},
                         {"class_names", class_names},
                         {"normalizer", normalizer.to_json()},
                         {"model", model_json},
                         {"training", training.to_json()}};
        j["checksum"] = to_hex64(fnv1a64(j.dump()));
        return j;
    }

    static ModelBundle from_json(nlohmann::json j) {
        if (!j.is_object() || j.value("magic", "") != kBundleMagic) {
            throw Error("model bundle: missing or wrong magic (not a bundle file?)");
        }
        if (j.value("format_version", -1) != kBundleFormatVersion) {
            throw Error("model bundle: unsupported format_version");
        }
        std::string stored = j.value("checksum", "");
        j.erase("checksum");
        std::string computed = to_hex64(fnv1a64(j.dump()));
        if (stored != computed) {
            throw Error("model bundle: checksum mismatch (file corrupted or edited): stored " +
                        stored + ", computed " + computed);
        }
        ModelBundle b;
        b.layout_name = j.at("layout").get<std::string>();
        b.class_names = j.at("class_names").get<std::vector<std::string>>();
        b.normalizer = MinMaxNormalizer::from_json(j.at("normalizer"));
        b.training = TrainingProvenance::from_json(j.at("training"));
        std::string kind = j.at("model_kind").get<std::string>();
        if (kind == "tree") b.model = DecisionTree::from_json(j.at("model"));
        else if (kind == "forest") b.model = RandomForest::from_json(j.at("model"));
        else if (kind == "dnn") b.model = Mlp::from_json(j.at("model"));
        else throw Error("model bundle: unknown model_kind '" + kind + "'");
        b.validate();
        return b;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write model bundle: " + path);
        os << to_json().dump(2) << "\n";
        if (!os) throw Error("write failed for model bundle: " + path);
    }

    static ModelBundle load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw Error("cannot read model bundle: " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error("model bundle '" + path + "' is not valid JSON: " + e.what());
        }
        return from_json(std::move(j));
    }

private:
    void validate() const {
        const FeatureLayout& lay = feature_layout();
        if (normalizer.size() != lay.size()) {
            throw Error("model bundle: normalizer width " + std::to_string(normalizer.size()) +
                        " does not match layout '" + layout_name + "'");
        }
        if (normalizer.feature_names != lay.features) {
            throw Error("model bundle: normalizer feature names do not match layout '" +
                        layout_name + "'");
        }
        size_t model_classes = 0;
        size_t model_inputs = 0;
        if (const auto* t = std::get_if<DecisionTree>(&model)) {
            model_classes = t->n_classes();
            model_inputs = t->n_features();
        } else if (const auto* f = std::get_if<RandomForest>(&model)) {
            model_classes = f->n_classes();
            model_inputs = f->trees().front().n_features();
        } else {
            const Mlp& net = std::get<Mlp>(model);
            model_classes = net.output_size();
            model_inputs = net.input_size();
        }
        if (model_classes != class_names.size()) {
            throw Error("model bundle: model has " + std::to_string(model_classes) +
                        " classes but " + std::to_string(class_names.size()) + " class names");
        }
        if (model_inputs != lay.size()) {
            throw Error("model bundle: model expects " + std::to_string(model_inputs) +
                        " inputs but layout '" + layout_name + "' has " +
                        std::to_string(lay.size()));
        }
    }
};

}  // namespace envclass
