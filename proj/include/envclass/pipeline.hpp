#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "envclass/adjustable.hpp"
#include "envclass/bundle.hpp"
#include "envclass/eval.hpp"
#include "envclass/ingest.hpp"
#include "envclass/matrix.hpp"
#include "envclass/synth.hpp"
#include "envclass/windowing.hpp"

namespace envclass::pipeline {

namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write file: " + path);
    os << content;
    if (!os) throw Error("write failed: " + path);
}

inline nlohmann::json load_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(fs::path(dir), ec);
    if (ec) throw Error("cannot create directory '" + dir + "': " + ec.message());
}

/// Seed streams: every derived purpose gets its own fixed stream index so
/// reruns with one master seed are reproducible end to end.
inline constexpr std::uint64_t kSeedStreamModel = 1;
inline constexpr std::uint64_t kSeedStreamBalance = 2;

// ---------------------------------------------------------------------------
// Shared split preparation (train and evaluate must agree exactly)
// ---------------------------------------------------------------------------

struct PreparedSplit {
    std::vector<std::string> class_names;
    SplitResult split;
};

/// Applies the class scheme, balances if two-class, and splits. The balance
/// seed derives from the split seed, so one seed reproduces the whole chain.
inline PreparedSplit prepare_split(std::vector<SplitItem> items, const SplitSpec& spec,
                                   const std::string& classes) {
    PreparedSplit out;
    if (classes == "2class") {
        out.class_names = two_class_names();
        items = relabel_two_class(std::move(items));
        std::uint64_t balance_seed = derive_seed(spec.seed, kSeedStreamBalance);
        items = spec.granularity == SplitGranularity::Window
                    ? balance_classes_by_window(std::move(items), balance_seed)
                    : balance_classes(std::move(items), balance_seed);
    } else if (classes == "3class") {
        out.class_names = three_class_names();
    } else {
        throw Error("unknown class scheme '" + classes + "' (expected 3class or 2class)");
    }
    out.split = stratified_split(std::move(items), spec);
    return out;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
    std::string input_dir;  // base for relative paths in the labels file
    std::string labels_path;
    std::string out_dir;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "ingest"},
                              {"input", input_dir},
                              {"labels", labels_path},
                              {"out", out_dir}};
    }
};

inline void run_ingest(const IngestOptions& opt) {
    std::ifstream labels_is(opt.labels_path, std::ios::binary);
    if (!labels_is) throw Error("cannot read labels file: " + opt.labels_path);
    std::vector<LabelAssignment> assignments = read_labels_file(labels_is);
    LoadResult loaded = load_dataset(assignments, {}, opt.input_dir);
    ensure_dir(opt.out_dir);

    std::ostringstream dataset;
    write_dataset_csv(dataset, loaded.sessions);
    write_file((fs::path(opt.out_dir) / "dataset.csv").string(), dataset.str());

    MinutesReport minutes = minutes_report(loaded.sessions);
    nlohmann::json rejects = nlohmann::json::array();
    for (const auto& r : loaded.rejects) {
        rejects.push_back(nlohmann::json{{"entry_index", r.entry_index}, {"reason", r.reason}});
    }
    nlohmann::json report{
        {"sessions", loaded.sessions.size()},
        {"records_kept", loaded.cleaning.records_kept},
        {"records_dropped", loaded.cleaning.records_dropped},
        {"observations_dropped",
         nlohmann::json{{"lte", loaded.cleaning.lte_dropped},
                        {"nr", loaded.cleaning.nr_dropped},
                        {"wifi", loaded.cleaning.wifi_dropped},
                        {"gps", loaded.cleaning.gps_dropped}}},
        {"rejected_records", rejects},
        {"unordered_timestamp_warnings", loaded.unordered_timestamp_warnings},
        {"minutes",
         nlohmann::json{{"per_label", minutes.per_label_minutes},
                        {"per_session", minutes.per_session_minutes},
                        {"total", minutes.total_minutes}}}};
    write_file((fs::path(opt.out_dir) / "ingest_report.json").string(), report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractOptions {
    std::string dataset_path;
    std::string layout_name = "all72";
    std::string out_dir;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "extract"},
                              {"dataset", dataset_path},
                              {"layout", layout_name},
                              {"out", out_dir}};
    }
};

/// Extracts one row per record. The matrix holds raw (unnormalized) values;
/// the sidecar records min-max parameters fitted over the whole matrix plus
/// the dataset fingerprint.
inline std::string run_extract(const ExtractOptions& opt) {
    const FeatureLayout& lay = layout_by_name(opt.layout_name);
    std::string dataset_bytes = read_file(opt.dataset_path);
    std::istringstream is(dataset_bytes);
    std::vector<RecordingSession> sessions = read_dataset_csv(is);
    if (sessions.empty()) throw Error("dataset '" + opt.dataset_path + "' has no records");

    FeatureMatrix m;
    m.layout_name = lay.name;
    m.feature_names = lay.features;
    for (const auto& s : sessions) {
        for (size_t i = 0; i < s.records.size(); ++i) {
            MatrixRow row;
            row.session_id = s.id;
            row.record_index = static_cast<std::int64_t>(i);
            const RawRecord& r = s.records[i];
            row.label = r.label ? to_string(*r.label)
                                : (s.label ? to_string(*s.label) : std::string());
            row.values = extract_features(r, lay);
            m.rows.push_back(std::move(row));
        }
    }

    ensure_dir(opt.out_dir);
    std::string matrix_path = (fs::path(opt.out_dir) / ("matrix_" + lay.name + ".csv")).string();
    std::ostringstream os;
    write_matrix_csv(os, m);
    write_file(matrix_path, os.str());

    std::vector<std::vector<double>> value_rows;
    value_rows.reserve(m.rows.size());
    for (const auto& r : m.rows) value_rows.push_back(r.values);
    MatrixSidecar sidecar;
    sidecar.layout_name = lay.name;
    sidecar.normalizer = MinMaxNormalizer::fit(value_rows, lay);
    sidecar.source_dataset_fingerprint = fingerprint_bytes(dataset_bytes);
    write_file(matrix_path + ".norm.json", sidecar.to_json().dump(2) + "\n");
    return matrix_path;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string matrix_path;
    std::string expected_layout;      // optional assertion against the matrix
    std::string model_kind = "tree";  // tree | forest | dnn
    std::string classes = "3class";   // 3class | 2class
    SplitSpec split;                  // split.seed comes from --seed
    TreeConfig tree;
    ForestConfig forest;
    DnnConfig dnn;
    std::string out_dir;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "train"},
                              {"matrix", matrix_path},
                              {"layout", expected_layout},
                              {"model", model_kind},
                              {"classes", classes},
                              {"split", split.to_json()},
                              {"out", out_dir}};
    }
};

namespace detail {

inline nlohmann::json model_config_json(const TrainOptions& opt) {
    if (opt.model_kind == "tree") {
        return nlohmann::json{{"max_depth", opt.tree.max_depth},
                              {"min_samples_leaf", opt.tree.min_samples_leaf}};
    }
    if (opt.model_kind == "forest") {
        return nlohmann::json{{"n_trees", opt.forest.n_trees},
                              {"feature_sampling", to_string(opt.forest.feature_sampling)},
                              {"max_depth", opt.forest.tree.max_depth},
                              {"min_samples_leaf", opt.forest.tree.min_samples_leaf}};
    }
    if (opt.model_kind == "dnn") {
        return nlohmann::json{{"hidden", opt.dnn.hidden},
                              {"learning_rate", opt.dnn.learning_rate},
                              {"beta1", opt.dnn.beta1},
                              {"beta2", opt.dnn.beta2},
                              {"epsilon", opt.dnn.epsilon},
                              {"batch_size", opt.dnn.batch_size},
                              {"max_epochs", opt.dnn.max_epochs},
                              {"patience", opt.dnn.patience}};
    }
    throw Error("unknown model kind '" + opt.model_kind + "' (expected tree, forest, or dnn)");
}

struct RowLookup {
    std::map<std::pair<std::string, std::int64_t>, size_t> index;

    explicit RowLookup(const FeatureMatrix& m) {
        for (size_t i = 0; i < m.rows.size(); ++i) {
            auto key = std::make_pair(m.rows[i].session_id, m.rows[i].record_index);
            if (!index.emplace(key, i).second) {
                throw Error("matrix has duplicate row for " + m.rows[i].session_id + "#" +
                            std::to_string(m.rows[i].record_index));
            }
        }
    }

    size_t at(const SplitItem& item) const {
        auto it = index.find(std::make_pair(item.session_id, item.record_index));
        if (it == index.end()) {
            throw Error("matrix is missing row " + item.session_id + "#" +
                        std::to_string(item.record_index));
        }
        return it->second;
    }
};

}  // namespace detail

/// Trains one bundle. The normalizer is fitted on the training split only.
/// Tree and forest models train on train+validation; the network uses the
/// validation split for early stopping instead. Returns the bundle path.
inline std::string run_train(const TrainOptions& opt) {
    std::string matrix_bytes = read_file(opt.matrix_path);
    std::istringstream mis(matrix_bytes);
    FeatureMatrix m = read_matrix_csv(mis);
    MatrixSidecar sidecar = MatrixSidecar::from_json(load_json_file(opt.matrix_path + ".norm.json"));
    if (sidecar.layout_name != m.layout_name) {
        throw Error("matrix sidecar layout '" + sidecar.layout_name +
                    "' does not match matrix layout '" + m.layout_name + "'");
    }
    if (!opt.expected_layout.empty() && opt.expected_layout != m.layout_name) {
        throw Error("matrix '" + opt.matrix_path + "' holds layout '" + m.layout_name +
                    "' but --layout asked for '" + opt.expected_layout + "'");
    }
    const FeatureLayout& lay = layout_by_name(m.layout_name);

    PreparedSplit prepared = prepare_split(items_from_matrix(m), opt.split, opt.classes);
    detail::RowLookup lookup(m);

    auto rows_of = [&](const std::vector<SplitItem>& items) {
        std::vector<std::vector<double>> rows;
        rows.reserve(items.size());
        for (const auto& it : items) rows.push_back(m.rows[lookup.at(it)].values);
        return rows;
    };
    auto labels_of = [&](const std::vector<SplitItem>& items) {
        std::vector<size_t> ys;
        ys.reserve(items.size());
        for (const auto& it : items) ys.push_back(class_index(it.label, prepared.class_names));
        return ys;
    };

    std::vector<std::vector<double>> train_raw = rows_of(prepared.split.train);
    MinMaxNormalizer norm = MinMaxNormalizer::fit(train_raw, lay);
    auto normalized = [&](std::vector<std::vector<double>> raw) {
        for (auto& r : raw) r = norm.apply(r);
        return raw;
    };
    std::vector<std::vector<double>> x_train = normalized(std::move(train_raw));
    std::vector<std::vector<double>> x_val = normalized(rows_of(prepared.split.val));
    std::vector<size_t> y_train = labels_of(prepared.split.train);
    std::vector<size_t> y_val = labels_of(prepared.split.val);

    const size_t k = prepared.class_names.size();
    const std::uint64_t model_seed = derive_seed(opt.split.seed, kSeedStreamModel);

    ModelBundle bundle;
    bundle.layout_name = lay.name;
    bundle.class_names = prepared.class_names;
    bundle.normalizer = norm;
    DnnTrainReport dnn_report;
    if (opt.model_kind == "dnn") {
        bundle.model = Mlp::train(x_train, y_train, x_val, y_val, k, opt.dnn, model_seed,
                                  &dnn_report);
    } else {
        // Trees do not use a validation set; fold it into training.
        std::vector<std::vector<double>> x_fit = x_train;
        x_fit.insert(x_fit.end(), x_val.begin(), x_val.end());
        std::vector<size_t> y_fit = y_train;
        y_fit.insert(y_fit.end(), y_val.begin(), y_val.end());
        if (opt.model_kind == "tree") {
            bundle.model = DecisionTree::fit(x_fit, y_fit, k, opt.tree);
        } else if (opt.model_kind == "forest") {
            bundle.model = RandomForest::fit(x_fit, y_fit, k, opt.forest, model_seed);
        } else {
            detail::model_config_json(opt);  // throws with the right message
        }
    }

    bundle.training.seed = opt.split.seed;
    bundle.training.model_config = detail::model_config_json(opt);
    bundle.training.dataset_fingerprint = sidecar.source_dataset_fingerprint;
    nlohmann::json split_json = opt.split.to_json();
    split_json["classes"] = opt.classes;
    bundle.training.split = split_json;

    ensure_dir(opt.out_dir);
    std::string name = "bundle_" + opt.model_kind + "_" + lay.name + "_" + opt.classes + ".json";
    std::string bundle_path = (fs::path(opt.out_dir) / name).string();
    bundle.save(bundle_path);

    nlohmann::json train_report{{"bundle", name},
                                {"layout", lay.name},
                                {"classes", prepared.class_names},
                                {"train_rows", prepared.split.train.size()},
                                {"val_rows", prepared.split.val.size()},
                                {"test_rows", prepared.split.test.size()}};
    if (opt.model_kind == "dnn") {
        train_report["epochs_run"] = dnn_report.epochs_run;
        train_report["best_epoch"] = dnn_report.best_epoch;
        train_report["best_val_loss"] = dnn_report.best_val_loss;
        train_report["early_stopped"] = dnn_report.early_stopped;
    }
    write_file(bundle_path + ".train.json", train_report.dump(2) + "\n");
    return bundle_path;
}

// ---------------------------------------------------------------------------
// evaluation helpers shared by evaluate, window-eval, and reproduce
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<std::string, const RecordingSession*> session_index(
    const std::vector<RecordingSession>& sessions) {
    std::map<std::string, const RecordingSession*> idx;
    for (const auto& s : sessions) {
        if (!idx.emplace(s.id, &s).second) throw Error("duplicate session id '" + s.id + "'");
    }
    return idx;
}

/// Re-derives the train-time split for a bundle over a dataset, verifying the
/// dataset is byte-identical to the one the bundle was trained from.
inline PreparedSplit rederive_split(const ModelBundle& bundle,
                                    const std::vector<RecordingSession>& sessions,
                                    const std::string& dataset_bytes) {
    std::string fp = fingerprint_bytes(dataset_bytes);
    if (fp != bundle.training.dataset_fingerprint) {
        throw Error("dataset fingerprint " + fp + " does not match the bundle's " +
                    bundle.training.dataset_fingerprint +
                    "; evaluation must run on the exact training dataset (use predict or "
                    "window-eval-free prediction for new data)");
    }
    SplitSpec spec = SplitSpec::from_json(bundle.training.split);
    std::string classes = bundle.training.split.at("classes").get<std::string>();
    return prepare_split(items_from_sessions(sessions), spec, classes);
}

inline std::string classes_tag(const ModelBundle& bundle) {
    return std::to_string(bundle.class_names.size()) + "class";
}

inline EvalCell per_record_cell(const ModelBundle& bundle,
                                const std::map<std::string, const RecordingSession*>& sessions,
                                const PreparedSplit& prepared) {
    const FeatureLayout& lay = bundle.feature_layout();
    ConfusionMatrix cm(bundle.class_names);
    for (const auto& item : prepared.split.test) {
        auto it = sessions.find(item.session_id);
        if (it == sessions.end()) throw Error("dataset lacks session '" + item.session_id + "'");
        const RawRecord& r = it->second->records.at(static_cast<size_t>(item.record_index));
        size_t truth = class_index(item.label, bundle.class_names);
        size_t pred = bundle.predict(extract_features(r, lay));
        cm.add(truth, pred);
    }
    EvalCell cell;
    cell.model = bundle.model_kind();
    cell.feature_set = bundle.layout_name;
    cell.technique = "none";
    cell.classes = classes_tag(bundle);
    cell.confusion = cm;
    return cell;
}

struct WindowAccounting {
    size_t windows_evaluated = 0;
    size_t windows_gapped = 0;
    size_t groups_incomplete = 0;
};

inline EvalCell window_cell(const ModelBundle& bundle,
                            const std::map<std::string, const RecordingSession*>& sessions,
                            const PreparedSplit& prepared, WindowTechnique technique,
                            WindowAccounting* accounting = nullptr) {
    if (technique == WindowTechnique::None) {
        throw Error("window evaluation needs technique mv or da");
    }
    ConfusionMatrix cm(bundle.class_names);
    WindowAccounting acc;
    const std::vector<SplitItem>& test = prepared.split.test;
    size_t start = 0;
    while (start < test.size()) {
        // Test items are sorted; windows are runs of kWindowLength consecutive
        // record indices within one session.
        size_t end = start + 1;
        while (end < test.size() && end - start < kWindowLength &&
               test[end].session_id == test[start].session_id &&
               test[end].record_index == test[end - 1].record_index + 1) {
            ++end;
        }
        if (end - start < kWindowLength) {
            ++acc.groups_incomplete;
            start = end;
            continue;
        }
        auto sit = sessions.find(test[start].session_id);
        if (sit == sessions.end()) {
            throw Error("dataset lacks session '" + test[start].session_id + "'");
        }
        const RecordingSession& session = *sit->second;
        Window w{static_cast<size_t>(test[start].record_index), kWindowLength};
        UtcMillis span = session.records.at(w.first_record + kWindowLength - 1).timestamp -
                         session.records.at(w.first_record).timestamp;
        if (span > kMaxWindowSpanMs) {
            ++acc.windows_gapped;
            start = end;
            continue;
        }
        size_t truth = class_index(test[start].label, bundle.class_names);
        size_t pred = technique == WindowTechnique::MajorityVote
                          ? classify_window_mv(bundle, session, w)
                          : classify_window_da(bundle, session, w);
        cm.add(truth, pred);
        ++acc.windows_evaluated;
        start = end;
    }
    if (accounting) *accounting = acc;
    EvalCell cell;
    cell.model = bundle.model_kind();
    cell.feature_set = bundle.layout_name;
    cell.technique = to_string(technique);
    cell.classes = classes_tag(bundle);
    cell.confusion = cm;
    return cell;
}

// ---------------------------------------------------------------------------
// bundle registries (availability-routed model families)
// ---------------------------------------------------------------------------

/// A directory of bundles treated as one routed family. Files are taken in
/// sorted name order so diagnostics and reports never depend on readdir order.
struct Registry {
    std::vector<std::string> names;    // bundle file names
    std::vector<ModelBundle> bundles;  // parallel to names
};

/// Loads every bundle_*.json in `dir` (skipping *.train.json sidecars),
/// optionally keeping only one class scheme. Routing needs the layout -> model
/// mapping to be a function, so duplicate layouts and mixed schemes are errors.
inline Registry load_registry(const std::string& dir, const std::string& classes_filter) {
    if (!fs::is_directory(fs::path(dir))) {
        throw Error("registry '" + dir + "' is not a directory");
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (!name.starts_with("bundle_") || !name.ends_with(".json")) continue;
        if (name.ends_with(".train.json")) continue;
        names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    Registry reg;
    for (const auto& name : names) {
        ModelBundle b = ModelBundle::load((fs::path(dir) / name).string());
        if (!classes_filter.empty() && classes_tag(b) != classes_filter) continue;
        reg.names.push_back(name);
        reg.bundles.push_back(std::move(b));
    }
    if (reg.bundles.empty()) {
        throw Error("registry '" + dir + "' has no " +
                    (classes_filter.empty() ? std::string("bundles")
                                            : classes_filter + " bundles") +
                    " (expected bundle_*.json files)");
    }
    for (size_t i = 1; i < reg.bundles.size(); ++i) {
        if (reg.bundles[i].class_names != reg.bundles[0].class_names) {
            throw Error("registry mixes class schemes: '" + reg.names[0] + "' and '" +
                        reg.names[i] + "' disagree");
        }
    }
    std::map<std::string, std::string> seen;
    for (size_t i = 0; i < reg.bundles.size(); ++i) {
        auto [it, inserted] = seen.emplace(reg.bundles[i].layout_name, reg.names[i]);
        if (!inserted) {
            throw Error("registry has two bundles for layout '" + reg.bundles[i].layout_name +
                        "' ('" + it->second + "' and '" + reg.names[i] +
                        "'); routing needs exactly one per layout");
        }
    }
    return reg;
}

/// The set borrows the registry's bundles; keep the registry alive.
inline ModelSet registry_model_set(const Registry& reg) {
    ModelSet set;
    for (const auto& b : reg.bundles) set.add(&b);
    return set;
}

/// Availability pooled over a window: any record with the radio counts.
inline FeatureAvailability window_availability(const RecordingSession& s, const Window& w) {
    FeatureAvailability a;
    for (size_t i = 0; i < w.count && !(a.has_wifi6 && a.has_nr); ++i) {
        FeatureAvailability ra = record_availability(s.records.at(w.first_record + i));
        a.has_wifi6 = a.has_wifi6 || ra.has_wifi6;
        a.has_nr = a.has_nr || ra.has_nr;
    }
    return a;
}

/// Maps a dataset label into the registry's class scheme ("" stays "").
inline std::string scheme_label(std::string label, size_t n_classes) {
    if (n_classes == 2 && (label == "II" || label == "INW")) return "I";
    return label;
}

/// Per-layout tally of routed decisions. Accuracy is over labeled decisions
/// only; the weighted overall number uses those same counts as weights.
struct RoutedTally {
    struct Group {
        size_t decisions = 0;
        size_t labeled = 0;
        size_t correct = 0;
    };
    std::map<std::string, Group> groups;

    void add(const std::string& layout_name, bool labeled, bool correct) {
        Group& g = groups[layout_name];
        ++g.decisions;
        if (labeled) {
            ++g.labeled;
            if (correct) ++g.correct;
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        std::vector<GroupAccuracy> weighted;
        for (const auto& [name, g] : groups) {
            nlohmann::json row{{"layout", name},
                               {"decisions", g.decisions},
                               {"labeled", g.labeled},
                               {"correct", g.correct}};
            if (g.labeled > 0) {
                double acc = static_cast<double>(g.correct) / static_cast<double>(g.labeled);
                row["accuracy"] = acc;
                weighted.push_back({name, g.labeled, acc});
            } else {
                row["accuracy"] = nullptr;
            }
            rows.push_back(std::move(row));
        }
        nlohmann::json report{{"groups", rows}};
        report["session_weighted_accuracy"] =
            weighted.empty() ? nlohmann::json()
                             : nlohmann::json(session_weighted_accuracy(weighted));
        return report;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateOptions {
    std::string bundle_path;    // single-bundle mode
    std::string registry_path;  // routed-registry mode (directory of bundles)
    std::string dataset_path;
    // Registry-mode knobs; empty means "not set" so single-bundle runs can
    // reject them while registry runs fall back to the documented defaults.
    std::vector<std::string> techniques;  // default {none}
    std::string classes;                  // default 3class
    std::string availability;             // default record
    std::string out_dir;

    std::vector<std::string> resolved_techniques() const {
        return techniques.empty() ? std::vector<std::string>{"none"} : techniques;
    }
    std::string resolved_classes() const { return classes.empty() ? "3class" : classes; }
    std::string resolved_availability() const {
        return availability.empty() ? "record" : availability;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"command", "evaluate"}, {"dataset", dataset_path}, {"out", out_dir}};
        if (registry_path.empty()) {
            j["bundle"] = bundle_path;
        } else {
            j["registry"] = registry_path;
            j["techniques"] = resolved_techniques();
            j["classes"] = resolved_classes();
            j["availability"] = resolved_availability();
        }
        return j;
    }
};

namespace detail {

/// Evaluates every bundle of a registry against the one train-time split they
/// all share, one report cell per bundle x technique, then scores
/// availability routing across the set on the same test split.
inline void run_evaluate_registry(const EvaluateOptions& opt) {
    Registry reg = load_registry(opt.registry_path, opt.resolved_classes());
    AvailabilityGranularity avail_gran =
        parse_availability_granularity(opt.resolved_availability());
    std::vector<std::string> techniques;
    for (const auto& t : opt.resolved_techniques()) {
        parse_window_technique(t);  // validate; throws on unknown names
        if (std::find(techniques.begin(), techniques.end(), t) == techniques.end()) {
            techniques.push_back(t);
        }
    }

    // Routing can land on any of the three device shapes, so the summary is
    // only meaningful when the registry covers all of them.
    for (const char* need : {"all72", "no6ghz67", "no6ghznonr40"}) {
        bool found = false;
        for (const auto& b : reg.bundles) found = found || b.layout_name == need;
        if (!found) {
            throw Error("registry is missing a bundle for layout '" + std::string(need) +
                        "' required for availability routing");
        }
    }

    // One split to rule them all: every bundle must have been trained from
    // the same dataset with the same split spec, or the cells would not be
    // comparable and the routing summary would mix test sets.
    for (size_t i = 1; i < reg.bundles.size(); ++i) {
        if (reg.bundles[i].training.dataset_fingerprint !=
            reg.bundles[0].training.dataset_fingerprint) {
            throw Error("registry bundles disagree on their training dataset ('" + reg.names[0] +
                        "' vs '" + reg.names[i] + "')");
        }
        if (reg.bundles[i].training.split != reg.bundles[0].training.split) {
            throw Error("registry bundles disagree on their train-time split ('" + reg.names[0] +
                        "' vs '" + reg.names[i] + "')");
        }
    }

    std::string dataset_bytes = read_file(opt.dataset_path);
    std::istringstream is(dataset_bytes);
    std::vector<RecordingSession> sessions = read_dataset_csv(is);
    PreparedSplit prepared = detail::rederive_split(reg.bundles[0], sessions, dataset_bytes);
    auto index = detail::session_index(sessions);

    std::vector<EvalCell> cells;
    for (size_t i = 0; i < reg.bundles.size(); ++i) {
        const ModelBundle& bundle = reg.bundles[i];
        for (const auto& tech : techniques) {
            WindowTechnique technique = parse_window_technique(tech);
            if (technique == WindowTechnique::None) {
                cells.push_back(per_record_cell(bundle, index, prepared));
                continue;
            }
            SplitSpec spec = SplitSpec::from_json(bundle.training.split);
            if (spec.granularity != SplitGranularity::Window) {
                throw Error("windowed technique '" + tech + "' requires window-granularity "
                            "training; '" + reg.names[i] + "' used " +
                            to_string(spec.granularity) + " granularity");
            }
            cells.push_back(window_cell(bundle, index, prepared, technique));
        }
    }
    ensure_dir(opt.out_dir);
    emit_report(opt.out_dir, cells);

    // Routed per-record accuracy over the shared test split. Labels in the
    // split are already in the registry's class scheme.
    ModelSet set = registry_model_set(reg);
    RoutedTally tally;
    for (const auto& item : prepared.split.test) {
        auto sit = index.find(item.session_id);
        if (sit == index.end()) throw Error("dataset lacks session '" + item.session_id + "'");
        const RecordingSession& session = *sit->second;
        const RawRecord& r = session.records.at(static_cast<size_t>(item.record_index));
        FeatureAvailability a = avail_gran == AvailabilityGranularity::Record
                                    ? record_availability(r)
                                    : session_availability(session);
        const ModelBundle& bundle = set.select(a);
        size_t pred = bundle.predict(extract_features(r, bundle.feature_layout()));
        tally.add(bundle.layout_name, true, bundle.class_names[pred] == item.label);
    }
    nlohmann::json report = tally.to_json();
    report["availability"] = opt.resolved_availability();
    report["classes"] = reg.bundles[0].class_names;
    report["bundles"] = reg.names;
    write_file((fs::path(opt.out_dir) / "adjustable_report.json").string(),
               report.dump(2) + "\n");
}

}  // namespace detail

/// Per-record test-set evaluation on the bundle's own train-time split; with
/// a registry, every bundle is scored per technique and availability routing
/// is scored across the set.
inline void run_evaluate(const EvaluateOptions& opt) {
    if (!opt.bundle_path.empty() && !opt.registry_path.empty()) {
        throw Error("evaluate takes either a bundle or a registry, not both");
    }
    if (!opt.registry_path.empty()) {
        detail::run_evaluate_registry(opt);
        return;
    }
    if (opt.bundle_path.empty()) throw Error("evaluate needs a bundle or a registry");
    for (const auto& t : opt.techniques) {
        if (t != "none") {
            throw Error("technique '" + t + "' needs a registry; use window-eval for windowed "
                        "evaluation of a single bundle");
        }
    }
    if (!opt.availability.empty()) {
        throw Error("availability granularity needs a registry; a single bundle never routes");
    }
    ModelBundle bundle = ModelBundle::load(opt.bundle_path);
    if (!opt.classes.empty() && opt.classes != detail::classes_tag(bundle)) {
        throw Error("bundle '" + opt.bundle_path + "' holds a " + detail::classes_tag(bundle) +
                    " model but --classes asked for " + opt.classes);
    }
    std::string dataset_bytes = read_file(opt.dataset_path);
    std::istringstream is(dataset_bytes);
    std::vector<RecordingSession> sessions = read_dataset_csv(is);
    PreparedSplit prepared = detail::rederive_split(bundle, sessions, dataset_bytes);
    auto index = detail::session_index(sessions);
    EvalCell cell = detail::per_record_cell(bundle, index, prepared);
    ensure_dir(opt.out_dir);
    emit_report(opt.out_dir, {cell});
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOptions {
    std::string bundle_path;    // single-bundle mode
    std::string registry_path;  // routed-registry mode (directory of bundles)
    std::string dataset_path;
    // Registry-mode knobs; empty means "not set" (see EvaluateOptions).
    std::string technique;     // default none
    std::string availability;  // default record
    std::string out_dir;

    std::string resolved_technique() const { return technique.empty() ? "none" : technique; }
    std::string resolved_availability() const {
        return availability.empty() ? "record" : availability;
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"command", "predict"}, {"dataset", dataset_path}, {"out", out_dir}};
        if (registry_path.empty()) {
            j["bundle"] = bundle_path;
        } else {
            j["registry"] = registry_path;
            j["technique"] = resolved_technique();
            j["availability"] = resolved_availability();
        }
        return j;
    }
};

namespace detail {

/// Routed prediction: every decision picks the widest bundle the device's
/// radios can fill, per record, or per 30 s window under mv/da.
inline std::string run_predict_registry(const PredictOptions& opt) {
    WindowTechnique technique = parse_window_technique(opt.resolved_technique());
    AvailabilityGranularity avail_gran =
        parse_availability_granularity(opt.resolved_availability());
    Registry reg = load_registry(opt.registry_path, "");
    ModelSet set = registry_model_set(reg);
    const size_t n_classes = reg.bundles[0].class_names.size();
    std::istringstream is(read_file(opt.dataset_path));
    std::vector<RecordingSession> sessions = read_dataset_csv(is);

    RoutedTally tally;
    size_t discarded_gapped = 0;
    size_t discarded_tail = 0;
    std::ostringstream os;
    csv::write_row(os, {"session_id", "window_or_record_index", "routed_layout",
                        "predicted_class", "true_class"});
    for (const auto& s : sessions) {
        FeatureAvailability session_avail = session_availability(s);
        auto truth_of = [&](const RawRecord& r) {
            std::string label = r.label ? to_string(*r.label)
                                        : (s.label ? to_string(*s.label) : std::string());
            return scheme_label(std::move(label), n_classes);
        };
        if (technique == WindowTechnique::None) {
            for (size_t i = 0; i < s.records.size(); ++i) {
                const RawRecord& r = s.records[i];
                FeatureAvailability a = avail_gran == AvailabilityGranularity::Record
                                            ? record_availability(r)
                                            : session_avail;
                const ModelBundle& bundle = set.select(a);
                size_t pred = bundle.predict(extract_features(r, bundle.feature_layout()));
                std::string truth = truth_of(r);
                tally.add(bundle.layout_name, !truth.empty(),
                          !truth.empty() && bundle.class_names[pred] == truth);
                csv::write_row(os, {s.id, std::to_string(i), bundle.layout_name,
                                    bundle.class_names[pred], truth});
            }
            continue;
        }
        WindowPlan plan = plan_windows(s);
        discarded_gapped += plan.discarded_gapped_records;
        discarded_tail += plan.discarded_tail_records;
        for (const Window& w : plan.windows) {
            FeatureAvailability a = avail_gran == AvailabilityGranularity::Record
                                        ? window_availability(s, w)
                                        : session_avail;
            const ModelBundle& bundle = set.select(a);
            size_t pred = technique == WindowTechnique::MajorityVote
                              ? classify_window_mv(bundle, s, w)
                              : classify_window_da(bundle, s, w);
            std::string truth = truth_of(s.records.at(w.first_record));
            tally.add(bundle.layout_name, !truth.empty(),
                      !truth.empty() && bundle.class_names[pred] == truth);
            csv::write_row(os, {s.id, std::to_string(w.first_record), bundle.layout_name,
                                bundle.class_names[pred], truth});
        }
    }

    ensure_dir(opt.out_dir);
    std::string out_path = (fs::path(opt.out_dir) / "predictions.csv").string();
    write_file(out_path, os.str());
    nlohmann::json report = tally.to_json();
    report["technique"] = opt.resolved_technique();
    report["availability"] = opt.resolved_availability();
    report["classes"] = reg.bundles[0].class_names;
    report["bundles"] = reg.names;
    if (technique != WindowTechnique::None) {
        report["discarded_gapped_records"] = discarded_gapped;
        report["discarded_tail_records"] = discarded_tail;
    }
    write_file((fs::path(opt.out_dir) / "registry_report.json").string(),
               report.dump(2) + "\n");
    return out_path;
}

}  // namespace detail

/// Classifies every record of a dataset (novel data welcome; no fingerprint
/// check) into predictions.csv. A registry routes each decision instead.
inline std::string run_predict(const PredictOptions& opt) {
    if (!opt.bundle_path.empty() && !opt.registry_path.empty()) {
        throw Error("predict takes either a bundle or a registry, not both");
    }
    if (!opt.registry_path.empty()) return detail::run_predict_registry(opt);
    if (opt.bundle_path.empty()) throw Error("predict needs a bundle or a registry");
    if (opt.resolved_technique() != "none") {
        throw Error("technique '" + opt.technique + "' needs a registry; single-bundle "
                    "prediction is per record");
    }
    if (!opt.availability.empty()) {
        throw Error("availability granularity needs a registry; a single bundle never routes");
    }
    ModelBundle bundle = ModelBundle::load(opt.bundle_path);
    const FeatureLayout& lay = bundle.feature_layout();
    std::istringstream is(read_file(opt.dataset_path));
    std::vector<RecordingSession> sessions = read_dataset_csv(is);

    ensure_dir(opt.out_dir);
    std::string out_path = (fs::path(opt.out_dir) / "predictions.csv").string();
    std::ostringstream os;
    std::vector<std::string> header = {"session_id", "record_index", "timestamp", "label",
                                       "predicted"};
    for (const auto& c : bundle.class_names) header.push_back("p_" + c);
    csv::write_row(os, header);
    for (const auto& s : sessions) {
        for (size_t i = 0; i < s.records.size(); ++i) {
            const RawRecord& r = s.records[i];
            std::vector<double> raw = extract_features(r, lay);
            std::vector<double> proba = bundle.predict_proba(raw);
            size_t pred = bundle.predict(raw);
            std::vector<std::string> row = {
                s.id, std::to_string(i), format_iso8601(r.timestamp),
                r.label ? to_string(*r.label) : std::string(), bundle.class_names[pred]};
            for (double p : proba) row.push_back(format_double(p));
            csv::write_row(os, row);
        }
    }
    write_file(out_path, os.str());
    return out_path;
}

// ---------------------------------------------------------------------------
// window-eval
// ---------------------------------------------------------------------------

struct WindowEvalOptions {
    std::string bundle_path;
    std::string dataset_path;
    std::string technique = "mv";  // mv | da
    std::string out_dir;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "window-eval"},
                              {"bundle", bundle_path},
                              {"dataset", dataset_path},
                              {"technique", technique},
                              {"out", out_dir}};
    }
};

/// Windowed test-set evaluation (majority voting or data aggregation) on the
/// bundle's own train-time split, which must use window granularity so test
/// windows are intact.
inline void run_window_eval(const WindowEvalOptions& opt) {
    WindowTechnique technique = parse_window_technique(opt.technique);
    ModelBundle bundle = ModelBundle::load(opt.bundle_path);
    SplitSpec spec = SplitSpec::from_json(bundle.training.split);
    if (spec.granularity != SplitGranularity::Window) {
        throw Error("window evaluation requires a bundle trained with window granularity; this "
                    "bundle used " +
                    to_string(spec.granularity) + " granularity");
    }
    std::string dataset_bytes = read_file(opt.dataset_path);
    std::istringstream is(dataset_bytes);
    std::vector<RecordingSession> sessions = read_dataset_csv(is);
    PreparedSplit prepared = detail::rederive_split(bundle, sessions, dataset_bytes);
    auto index = detail::session_index(sessions);
    detail::WindowAccounting acc;
    EvalCell cell = detail::window_cell(bundle, index, prepared, technique, &acc);
    ensure_dir(opt.out_dir);
    emit_report(opt.out_dir, {cell});
    nlohmann::json report{{"windows_evaluated", acc.windows_evaluated},
                          {"windows_gapped", acc.windows_gapped},
                          {"groups_incomplete", acc.groups_incomplete}};
    write_file((fs::path(opt.out_dir) / "window_report.json").string(), report.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
    size_t sessions_per_label = 6;
    size_t records_per_session = 60;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::vector<std::string> cdf_features;  // optional separation report
    // Config-file-only knobs: partial per-class profile overrides and the
    // horizontal-accuracy trend switch.
    nlohmann::json profile_overrides = nlohmann::json::object();
    bool invert_horizontal_accuracy = false;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "synth"},
                              {"sessions_per_label", sessions_per_label},
                              {"records_per_session", records_per_session},
                              {"seed", seed},
                              {"cdf_features", cdf_features},
                              {"profiles", profile_overrides},
                              {"invert_horizontal_accuracy", invert_horizontal_accuracy},
                              {"out", out_dir}};
    }
};

inline std::string run_synth(const SynthOptions& opt) {
    SynthConfig config;
    config.sessions_per_label = opt.sessions_per_label;
    config.records_per_session = opt.records_per_session;
    config.seed = opt.seed;
    if (opt.invert_horizontal_accuracy) invert_horizontal_accuracy(config.profiles);
    if (!opt.profile_overrides.empty()) {
        apply_profile_overrides(config.profiles, opt.profile_overrides);
    }
    std::vector<RecordingSession> sessions = generate_dataset(config);
    ensure_dir(opt.out_dir);
    std::string dataset_path = (fs::path(opt.out_dir) / "dataset.csv").string();
    std::ostringstream os;
    write_dataset_csv(os, sessions);
    write_file(dataset_path, os.str());
    if (!opt.cdf_features.empty()) {
        std::ostringstream cdf;
        emit_cdf_report(cdf, sessions, opt.cdf_features);
        write_file((fs::path(opt.out_dir) / "cdf.csv").string(), cdf.str());
    }
    return dataset_path;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

struct ReproduceOptions {
    std::uint64_t seed = 0;
    size_t sessions_per_label = 6;
    size_t records_per_session = 60;
    std::string out_dir;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", "reproduce"},
                              {"seed", seed},
                              {"sessions_per_label", sessions_per_label},
                              {"records_per_session", records_per_session},
                              {"out", out_dir}};
    }
};

/// End-to-end deterministic run: synthesize a corpus, extract all four
/// layouts, train every model x layout x class-scheme combination at window
/// granularity, evaluate per-record everywhere plus windowed techniques on
/// the full layout, and write a checksum manifest of every produced file.
inline void run_reproduce(const ReproduceOptions& opt) {
    ensure_dir(opt.out_dir);

    SynthOptions synth_opt;
    synth_opt.sessions_per_label = opt.sessions_per_label;
    synth_opt.records_per_session = opt.records_per_session;
    synth_opt.seed = derive_seed(opt.seed, 10);
    synth_opt.out_dir = (fs::path(opt.out_dir) / "data").string();
    std::string dataset_path = run_synth(synth_opt);

    const std::vector<std::string> layouts = {"all72", "no6ghz67", "no6ghznonr40", "best4"};
    std::map<std::string, std::string> matrix_paths;
    for (const auto& lname : layouts) {
        ExtractOptions ex;
        ex.dataset_path = dataset_path;
        ex.layout_name = lname;
        ex.out_dir = (fs::path(opt.out_dir) / "matrices").string();
        matrix_paths[lname] = run_extract(ex);
    }

    std::string dataset_bytes = read_file(dataset_path);
    std::istringstream dis(dataset_bytes);
    std::vector<RecordingSession> sessions = read_dataset_csv(dis);
    auto session_idx = detail::session_index(sessions);

    std::vector<EvalCell> cells;
    std::uint64_t train_stream = 20;
    for (const char* model : {"tree", "forest", "dnn"}) {
        for (const auto& lname : layouts) {
            for (const char* classes : {"3class", "2class"}) {
                TrainOptions tr;
                tr.matrix_path = matrix_paths[lname];
                tr.model_kind = model;
                tr.classes = classes;
                tr.split.granularity = SplitGranularity::Window;
                tr.split.seed = derive_seed(opt.seed, train_stream++);
                tr.out_dir = (fs::path(opt.out_dir) / "bundles").string();
                std::string bundle_path = run_train(tr);

                ModelBundle bundle = ModelBundle::load(bundle_path);
                PreparedSplit prepared = detail::rederive_split(bundle, sessions, dataset_bytes);
                cells.push_back(detail::per_record_cell(bundle, session_idx, prepared));
                if (lname == "all72") {
                    cells.push_back(detail::window_cell(bundle, session_idx, prepared,
                                                        WindowTechnique::MajorityVote));
                    cells.push_back(detail::window_cell(bundle, session_idx, prepared,
                                                        WindowTechnique::DataAggregation));
                }
            }
        }
    }
    std::string reports_dir = (fs::path(opt.out_dir) / "reports").string();
    ensure_dir(reports_dir);
    emit_report(reports_dir, cells);

    // Manifest: checksum every produced file, relative paths, sorted.
    std::map<std::string, std::string> checksums;
    for (const auto& entry : fs::recursive_directory_iterator(opt.out_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), fs::path(opt.out_dir)).generic_string();
        if (rel == "manifest.json" || rel == "resolved_config.json") continue;
        checksums[rel] = fingerprint_bytes(read_file(entry.path().string()));
    }
    nlohmann::json manifest{{"seed", opt.seed},
                            {"sessions_per_label", opt.sessions_per_label},
                            {"records_per_session", opt.records_per_session},
                            {"files", checksums}};
    write_file((fs::path(opt.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace envclass::pipeline
